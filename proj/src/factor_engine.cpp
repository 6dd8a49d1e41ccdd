#include "xmf/factor_engine.hpp"

#include "xmf/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <fmt/core.h>

namespace xmf {

std::string_view to_string(FactorVariant v)
{
    switch (v) {
    case FactorVariant::raw: return "raw";
    case FactorVariant::neutralized: return "neutralized";
    case FactorVariant::strict: return "strict";
    }
    return "?";
}

FactorVariant parse_factor_variant(std::string_view text)
{
    if (text == "raw")
        return FactorVariant::raw;
    if (text == "neutralized" || text == "neutral")
        return FactorVariant::neutralized;
    if (text == "strict" || text == "strict_neutralized")
        return FactorVariant::strict;
    throw Error(fmt::format("unknown factor variant '{}'", text));
}

FactorPanel compute_factor(const PeerWeights& weights, const PricePanel& prices, Month month, int lookback)
{
    FactorPanel out;
    out.month = month;
    out.source = weights.source;
    out.target = weights.target;
    out.lookback = lookback;
    out.scheme = weights.scheme;
    out.variant = FactorVariant::raw;

    // Source returns through M-1 only.
    const auto& universe = prices.universe();
    const auto source_returns = prices.sector_relative_cross_section(weights.source, month - 1, lookback);
    const auto& members = universe.members(weights.source);
    std::unordered_map<FirmIndex, double> by_firm;
    by_firm.reserve(members.size());
    for (std::size_t k = 0; k < members.size(); ++k)
        by_firm.emplace(members[k], source_returns[k]);
    std::vector<double> peer_return(weights.sources.size(), kMissing);
    for (std::size_t s = 0; s < weights.sources.size(); ++s) {
        auto it = by_firm.find(weights.sources[s]);
        if (it != by_firm.end())
            peer_return[s] = it->second;
    }

    const std::size_t ns = weights.sources.size();
    for (std::size_t t = 0; t < weights.targets.size(); ++t) {
        double num = 0.0, mass = 0.0;
        for (std::size_t s = 0; s < ns; ++s) {
            const double a = weights.alpha[t * ns + s];
            if (!(a > 0.0) || std::isnan(peer_return[s]))
                continue;
            num += a * peer_return[s];
            mass += a;
        }
        if (mass > 0.0) {
            out.firms.push_back(weights.targets[t]);
            out.values.push_back(num / mass);
        }
    }
    // Keep ascending firm order regardless of weight layout.
    std::vector<std::size_t> order(out.firms.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return out.firms[a] < out.firms[b]; });
    FactorPanel sorted = out;
    for (std::size_t k = 0; k < order.size(); ++k) {
        sorted.firms[k] = out.firms[order[k]];
        sorted.values[k] = out.values[order[k]];
    }
    return sorted;
}

namespace {

double mean_of(std::span<const double> x)
{
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_sd(std::span<const double> x)
{
    const double m = mean_of(x);
    double ss = 0.0;
    for (double v : x)
        ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

std::vector<double> standardize(std::span<const double> x)
{
    const double m = mean_of(x);
    const double sd = sample_sd(x);
    std::vector<double> out(x.size(), 0.0);
    if (sd > 0.0)
        for (std::size_t k = 0; k < x.size(); ++k)
            out[k] = (x[k] - m) / sd;
    return out;
}

int sector_count(std::span<const int> sectors)
{
    int hi = -1;
    for (int s : sectors) {
        if (s < 0)
            throw Error("sector codes must be non-negative");
        hi = std::max(hi, s);
    }
    return hi + 1;
}

/// Subtracts per-sector means in place; returns the means removed.
std::vector<double> demean_by_sector(std::vector<double>& x, std::span<const int> sectors, int n_sectors)
{
    std::vector<double> sum(static_cast<std::size_t>(n_sectors), 0.0);
    std::vector<std::size_t> cnt(static_cast<std::size_t>(n_sectors), 0);
    for (std::size_t k = 0; k < x.size(); ++k) {
        sum[static_cast<std::size_t>(sectors[k])] += x[k];
        ++cnt[static_cast<std::size_t>(sectors[k])];
    }
    std::vector<double> means(static_cast<std::size_t>(n_sectors), 0.0);
    for (std::size_t s = 0; s < means.size(); ++s)
        if (cnt[s] > 0)
            means[s] = sum[s] / static_cast<double>(cnt[s]);
    for (std::size_t k = 0; k < x.size(); ++k)
        x[k] -= means[static_cast<std::size_t>(sectors[k])];
    return means;
}

}  // namespace

Neutralized neutralize(std::span<const double> factor, std::span<const int> sectors, std::span<const double> log_caps)
{
    const std::size_t n = factor.size();
    if (sectors.size() != n || log_caps.size() != n)
        throw Error("neutralize: input lengths differ");
    if (n < 3)
        throw Error(fmt::format("neutralize: need at least 3 firms, got {}", n));
    const int n_sectors = sector_count(sectors);

    Neutralized out;
    auto& rep = out.report;
    rep.n_used = n;
    {
        std::vector<bool> seen(static_cast<std::size_t>(n_sectors), false);
        for (int s : sectors)
            seen[static_cast<std::size_t>(s)] = true;
        rep.single_sector = std::count(seen.begin(), seen.end(), true) == 1;
    }

    std::vector<double> y(factor.begin(), factor.end());
    rep.sector_means = demean_by_sector(y, sectors, n_sectors);

    double scale = 0.0;
    for (double v : factor)
        scale = std::max(scale, std::abs(v));
    const double sd = sample_sd(y);
    if (!(sd > 1e-14 * std::max(scale, 1e-300))) {
        rep.degenerate = true;
        out.residuals.assign(n, 0.0);
        return out;
    }
    for (double& v : y)
        v /= sd;

    auto x = standardize(log_caps);
    demean_by_sector(x, sectors, n_sectors);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sxy += x[k] * y[k];
        sxx += x[k] * x[k];
    }
    rep.size_beta = sxx > 1e-24 ? sxy / sxx : 0.0;
    out.residuals.resize(n);
    for (std::size_t k = 0; k < n; ++k)
        out.residuals[k] = y[k] - rep.size_beta * x[k];
    rep.residual_sd = sample_sd(out.residuals);
    return out;
}

double quantile(std::vector<double> values, double q)
{
    if (values.empty())
        throw Error("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

StrictNeutralized strict_neutralize(std::span<const double> factor, std::span<const int> sectors,
                                    std::span<const double> log_caps, std::span<const double> industry_momentum,
                                    std::span<const double> own_momentum)
{
    const std::size_t n = factor.size();
    if (sectors.size() != n || log_caps.size() != n || industry_momentum.size() != n || own_momentum.size() != n)
        throw Error("strict_neutralize: input lengths differ");
    if (n < 3)
        throw Error(fmt::format("strict_neutralize: need at least 3 firms, got {}", n));

    StrictNeutralized out;
    std::vector<double> f(factor.begin(), factor.end());
    out.winsor_low = quantile(f, 0.01);
    out.winsor_high = quantile(f, 0.99);
    for (double& v : f)
        v = std::clamp(v, out.winsor_low, out.winsor_high);
    const auto y = standardize(f);

    // Candidate regressors in priority order: sector dummies first so the
    // residual always carries zero sector means.
    const int n_sectors = sector_count(sectors);
    std::vector<std::string> names;
    std::vector<Eigen::VectorXd> cols;
    for (int s = 0; s < n_sectors; ++s) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        bool any = false;
        for (std::size_t k = 0; k < n; ++k)
            if (sectors[k] == s) {
                c(static_cast<Eigen::Index>(k)) = 1.0;
                any = true;
            }
        if (any) {
            names.push_back(fmt::format("sector_{}", s));
            cols.push_back(std::move(c));
        }
    }
    auto push = [&](std::string name, std::span<const double> v) {
        Eigen::VectorXd c(static_cast<Eigen::Index>(n));
        for (std::size_t k = 0; k < n; ++k)
            c(static_cast<Eigen::Index>(k)) = v[k];
        names.push_back(std::move(name));
        cols.push_back(std::move(c));
    };
    push("log_cap", standardize(log_caps));
    push("industry_momentum", industry_momentum);
    push("own_momentum", own_momentum);

    // Greedy Gram-Schmidt: keep a column only if it adds a direction.
    std::vector<Eigen::VectorXd> basis;
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        Eigen::VectorXd r = cols[c];
        for (const auto& q : basis)
            r -= q.dot(r) * q;
        for (const auto& q : basis)  // second pass for numerical stability
            r -= q.dot(r) * q;
        const double norm0 = cols[c].norm();
        if (norm0 > 0.0 && r.norm() > 1e-9 * norm0) {
            basis.push_back(r / r.norm());
            kept.push_back(c);
        } else {
            out.dropped_columns.push_back(names[c]);
        }
    }

    Eigen::VectorXd yv(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k)
        yv(static_cast<Eigen::Index>(k)) = y[k];
    if (kept.size() >= n) {
        out.residuals.assign(n, 0.0);
        return out;
    }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t c = 0; c < kept.size(); ++c)
        X.col(static_cast<Eigen::Index>(c)) = cols[kept[c]];
    const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(yv);
    const Eigen::VectorXd resid = yv - X * beta;
    out.residuals.assign(resid.data(), resid.data() + resid.size());
    return out;
}

namespace {

/// Dense per-month sector codes for a set of firms.
std::vector<int> sector_codes(const Universe& universe, std::span<const FirmIndex> firms)
{
    std::unordered_map<int, int> remap;
    std::vector<int> out;
    out.reserve(firms.size());
    for (FirmIndex f : firms) {
        auto [it, inserted] = remap.emplace(universe.sector_group(f), static_cast<int>(remap.size()));
        out.push_back(it->second);
    }
    return out;
}

}  // namespace

FactorPanel neutralize_panel(const FactorPanel& raw, const PricePanel& prices, NeutralizationReport* report)
{
    FactorPanel out = raw;
    out.variant = FactorVariant::neutralized;
    out.firms.clear();
    out.values.clear();
    std::vector<double> f, caps;
    std::vector<FirmIndex> used;
    for (std::size_t k = 0; k < raw.firms.size(); ++k) {
        auto cap = prices.log_market_cap(raw.firms[k], raw.month - 1);
        if (!cap || std::isnan(raw.values[k]))
            continue;
        used.push_back(raw.firms[k]);
        f.push_back(raw.values[k]);
        caps.push_back(*cap);
    }
    if (used.size() < 3)
        return out;
    const auto sectors = sector_codes(prices.universe(), used);
    auto res = neutralize(f, sectors, caps);
    res.report.month = raw.month;
    if (report)
        *report = res.report;
    out.firms = std::move(used);
    out.values = std::move(res.residuals);
    return out;
}

FactorPanel strict_neutralize_panel(const FactorPanel& raw, const PricePanel& prices, std::vector<std::string>* dropped)
{
    constexpr int kMomentumMonths = 12;
    FactorPanel out = raw;
    out.variant = FactorVariant::strict;
    out.firms.clear();
    out.values.clear();

    const auto& universe = prices.universe();
    const auto& members = universe.members(raw.target);
    const auto own = prices.sector_relative_cross_section(raw.target, raw.month - 1, kMomentumMonths);
    const auto industry = prices.sector_mean_cross_section(raw.target, raw.month - 1, kMomentumMonths);
    std::unordered_map<FirmIndex, std::size_t> pos;
    for (std::size_t k = 0; k < members.size(); ++k)
        pos.emplace(members[k], k);

    std::vector<double> f, caps, ind, own_m;
    std::vector<FirmIndex> used;
    for (std::size_t k = 0; k < raw.firms.size(); ++k) {
        const FirmIndex firm = raw.firms[k];
        auto cap = prices.log_market_cap(firm, raw.month - 1);
        auto it = pos.find(firm);
        if (!cap || it == pos.end() || std::isnan(own[it->second]) || std::isnan(industry[it->second]))
            continue;
        used.push_back(firm);
        f.push_back(raw.values[k]);
        caps.push_back(*cap);
        ind.push_back(industry[it->second]);
        own_m.push_back(own[it->second]);
    }
    if (used.size() < 3)
        return out;
    const auto sectors = sector_codes(universe, used);
    auto res = strict_neutralize(f, sectors, caps, ind, own_m);
    if (dropped)
        *dropped = res.dropped_columns;
    out.firms = std::move(used);
    out.values = std::move(res.residuals);
    return out;
}

FactorPanel build_factor(const PeerWeights& weights, const PricePanel& prices, Month month, int lookback,
                         FactorVariant variant)
{
    auto raw = compute_factor(weights, prices, month, lookback);
    switch (variant) {
    case FactorVariant::raw: return raw;
    case FactorVariant::neutralized: return neutralize_panel(raw, prices);
    case FactorVariant::strict: return strict_neutralize_panel(raw, prices);
    }
    return raw;
}

AuditVerdict lookahead_audit(const FactorBuilder& builder, const PricePanel& prices, std::span<const Month> months,
                             std::uint64_t seed, unsigned threads)
{
    std::vector<std::vector<Contamination>> found(months.size());
    parallel_for(months.size(), threads, [&](std::size_t k) {
        const Month m = months[k];
        const auto clean = builder(prices, m);
        const auto perturbed_prices =
            prices.with_perturbed_prices(m.first_day(), seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(m.index + 1)));
        const auto dirty = builder(perturbed_prices, m);
        std::unordered_map<FirmIndex, double> dirty_values;
        for (std::size_t j = 0; j < dirty.firms.size(); ++j)
            dirty_values.emplace(dirty.firms[j], dirty.values[j]);
        for (std::size_t j = 0; j < clean.firms.size(); ++j) {
            auto it = dirty_values.find(clean.firms[j]);
            if (it == dirty_values.end() ||
                std::bit_cast<std::uint64_t>(it->second) != std::bit_cast<std::uint64_t>(clean.values[j]))
                found[k].push_back({m, clean.firms[j]});
            if (it != dirty_values.end())
                dirty_values.erase(it);
        }
        for (const auto& [firm, value] : dirty_values)
            found[k].push_back({m, firm});
    });
    AuditVerdict verdict;
    verdict.months_checked = months.size();
    for (auto& f : found) {
        std::sort(f.begin(), f.end(), [](const Contamination& a, const Contamination& b) { return a.firm < b.firm; });
        verdict.contaminated.insert(verdict.contaminated.end(), f.begin(), f.end());
    }
    verdict.passed = verdict.contaminated.empty();
    return verdict;
}

}  // namespace xmf
