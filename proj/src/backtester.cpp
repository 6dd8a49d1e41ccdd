#include "xmf/backtester.hpp"

#include "xmf/graph_builder.hpp"
#include "xmf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include <fmt/core.h>

namespace xmf {

std::array<std::size_t, 5> quintile_sizes(std::size_t n)
{
    std::array<std::size_t, 5> sizes;
    sizes.fill(n / 5);
    constexpr std::array<std::size_t, 5> kRemainderOrder{0, 4, 1, 3, 2};
    for (std::size_t k = 0; k < n % 5; ++k)
        ++sizes[kRemainderOrder[k]];
    return sizes;
}

QuintileAssignment quintile_sort(std::span<const std::string> ids, std::span<const double> values)
{
    if (ids.size() != values.size())
        throw Error("quintile_sort: ids and values differ in length");
    if (values.size() < 5)
        throw Error(fmt::format("quintile_sort: need at least 5 firms, got {}", values.size()));
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b])
            return values[a] < values[b];
        return ids[a] < ids[b];
    });
    QuintileAssignment out;
    const auto sizes = quintile_sizes(values.size());
    std::size_t pos = 0;
    for (std::size_t q = 0; q < 5; ++q)
        for (std::size_t k = 0; k < sizes[q]; ++k)
            out.buckets[q].push_back(order[pos++]);
    out.degenerate = std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; });
    return out;
}

double leg_turnover(std::span<const FirmIndex> previous, std::span<const FirmIndex> current)
{
    if (current.empty())
        return 0.0;
    if (previous.empty())
        return 1.0;
    const double w_new = 1.0 / static_cast<double>(current.size());
    const double w_old = 1.0 / static_cast<double>(previous.size());
    std::unordered_set<FirmIndex> old(previous.begin(), previous.end());
    double bought = 0.0;
    for (FirmIndex f : current)
        bought += old.count(f) ? std::max(0.0, w_new - w_old) : w_new;
    return bought;
}

std::optional<MonthlyBook> make_book(const FactorPanel& factor, const Universe& universe, const MonthlyBook* previous)
{
    if (factor.firms.size() < 5)
        return std::nullopt;
    std::vector<std::string> ids;
    ids.reserve(factor.firms.size());
    for (FirmIndex f : factor.firms)
        ids.push_back(universe.firm(f).id);
    const auto q = quintile_sort(ids, factor.values);
    MonthlyBook book;
    book.month = factor.month;
    book.degenerate = q.degenerate;
    for (std::size_t k : q.buckets[4])
        book.long_leg.push_back(factor.firms[k]);
    for (std::size_t k : q.buckets[0])
        book.short_leg.push_back(factor.firms[k]);
    std::sort(book.long_leg.begin(), book.long_leg.end());
    std::sort(book.short_leg.begin(), book.short_leg.end());
    book.long_turnover = leg_turnover(previous ? std::span<const FirmIndex>(previous->long_leg) : std::span<const FirmIndex>{},
                                      book.long_leg);
    book.short_turnover = leg_turnover(
        previous ? std::span<const FirmIndex>(previous->short_leg) : std::span<const FirmIndex>{}, book.short_leg);
    return book;
}

namespace {

double mean_of(std::span<const double> x)
{
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

std::optional<double> sample_sd(std::span<const double> x)
{
    if (x.size() < 2)
        return std::nullopt;
    // A constant series has sd 0 even when the mean does not round exactly.
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }))
        return 0.0;
    const double m = mean_of(x);
    double ss = 0.0;
    for (double v : x)
        ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

std::vector<double> average_ranks(std::span<const double> x)
{
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    std::size_t lo = 0;
    while (lo < order.size()) {
        std::size_t hi = lo;
        while (hi + 1 < order.size() && x[order[hi + 1]] == x[order[lo]])
            ++hi;
        const double r = (static_cast<double>(lo) + static_cast<double>(hi)) / 2.0 + 1.0;
        for (std::size_t k = lo; k <= hi; ++k)
            ranks[order[k]] = r;
        lo = hi + 1;
    }
    return ranks;
}

std::vector<double> finite_only(std::span<const double> x)
{
    std::vector<double> out;
    for (double v : x)
        if (!std::isnan(v))
            out.push_back(v);
    return out;
}

}  // namespace

LsReturn ls_return(std::span<const double> long_returns, std::span<const double> short_returns, double long_turnover,
                   double short_turnover, double cost_bp)
{
    if (long_returns.empty() || short_returns.empty())
        throw Error("ls_return: empty leg");
    LsReturn r;
    r.gross = mean_of(long_returns) - mean_of(short_returns);
    r.cost = cost_bp / 10000.0 * (long_turnover + short_turnover);
    r.net = r.gross - r.cost;
    return r;
}

std::optional<double> spearman_ic(std::span<const double> factor, std::span<const double> forward)
{
    if (factor.size() != forward.size())
        throw Error("spearman_ic: inputs differ in length");
    std::vector<double> x, y;
    for (std::size_t k = 0; k < factor.size(); ++k)
        if (!std::isnan(factor[k]) && !std::isnan(forward[k])) {
            x.push_back(factor[k]);
            y.push_back(forward[k]);
        }
    if (x.size() < 3)
        return std::nullopt;
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double mx = mean_of(rx), my = mean_of(ry);
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t k = 0; k < rx.size(); ++k) {
        sxx += (rx[k] - mx) * (rx[k] - mx);
        syy += (ry[k] - my) * (ry[k] - my);
        sxy += (rx[k] - mx) * (ry[k] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0))
        return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

std::optional<double> icir(std::span<const double> ics)
{
    const auto x = finite_only(ics);
    const auto sd = sample_sd(x);
    if (!sd || !(*sd > 0.0))
        return std::nullopt;
    return mean_of(x) / *sd * std::sqrt(12.0);
}

std::optional<double> sharpe_ratio(std::span<const double> returns)
{
    const auto sd = sample_sd(returns);
    if (!sd || !(*sd > 0.0))
        return std::nullopt;
    return mean_of(returns) / *sd * std::sqrt(12.0);
}

std::vector<double> wealth_curve(std::span<const double> returns)
{
    std::vector<double> v;
    v.reserve(returns.size());
    double w = 1.0;
    for (double r : returns) {
        w *= 1.0 + r;
        v.push_back(w);
    }
    return v;
}

double max_drawdown(std::span<const double> returns)
{
    double peak = -std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (double w : wealth_curve(returns)) {
        peak = std::max(peak, w);
        worst = std::min(worst, w / peak - 1.0);
    }
    return worst;
}

double annualized_return(std::span<const double> returns)
{
    if (returns.empty())
        throw Error("annualized_return of an empty series");
    return 12.0 * mean_of(returns);
}

double cumulative_sum_return(std::span<const double> returns)
{
    return std::accumulate(returns.begin(), returns.end(), 0.0);
}

BacktestMetrics compute_metrics(std::span<const double> ics, std::span<const double> ls_returns)
{
    BacktestMetrics m;
    const auto valid_ic = finite_only(ics);
    m.ic_months = valid_ic.size();
    m.traded_months = ls_returns.size();
    if (!valid_ic.empty())
        m.ic_mean = mean_of(valid_ic);
    m.icir = icir(valid_ic);
    if (ls_returns.size() >= 2) {
        m.sharpe = sharpe_ratio(ls_returns);
        m.max_drawdown = max_drawdown(ls_returns);
        m.annual_return = annualized_return(ls_returns);
        m.cumulative_return = cumulative_sum_return(ls_returns);
    }
    return m;
}

BacktestReport run_backtest(std::span<const FactorPanel> factors, const PricePanel& prices, double cost_bp)
{
    BacktestReport report;
    report.cost_bp = cost_bp;
    std::vector<double> ics;
    std::optional<MonthlyBook> previous;
    for (const auto& panel : factors) {
        MonthRecord rec;
        rec.month = panel.month;
        rec.n_firms = panel.firms.size();
        std::vector<double> fwd(panel.firms.size(), kMissing);
        for (std::size_t k = 0; k < panel.firms.size(); ++k)
            if (auto r = prices.monthly_return(panel.firms[k], panel.month))
                fwd[k] = *r;
        if (auto ic = spearman_ic(panel.values, fwd))
            rec.ic = *ic;
        ics.push_back(rec.ic);

        auto book = make_book(panel, prices.universe(), previous ? &*previous : nullptr);
        if (!book) {
            // Nothing held this month; the next book is a full rebuild.
            previous.reset();
            report.months.push_back(rec);
            continue;
        }
        auto leg_returns = [&](const std::vector<FirmIndex>& leg) {
            std::vector<double> out;
            out.reserve(leg.size());
            for (FirmIndex f : leg) {
                auto r = prices.monthly_return(f, panel.month);
                if (!r)
                    ++rec.delisted_members;
                out.push_back(r.value_or(0.0));
            }
            return out;
        };
        const auto lr = leg_returns(book->long_leg);
        const auto sr = leg_returns(book->short_leg);
        const auto ls = ls_return(lr, sr, book->long_turnover, book->short_turnover, cost_bp);
        rec.traded = true;
        rec.gross = ls.gross;
        rec.cost = ls.cost;
        rec.net = ls.net;
        rec.long_turnover = book->long_turnover;
        rec.short_turnover = book->short_turnover;
        rec.degenerate = book->degenerate;
        report.ls_returns.push_back(ls.net);
        report.months.push_back(rec);
        previous = std::move(book);
    }
    report.wealth = wealth_curve(report.ls_returns);
    report.metrics = compute_metrics(ics, report.ls_returns);
    return report;
}

GeographyMatrix geography_matrix(std::span<const Market> markets,
                                 const std::function<std::optional<double>(Market, Market)>& pair_icir,
                                 unsigned threads)
{
    GeographyMatrix g;
    g.markets.assign(markets.begin(), markets.end());
    const std::size_t n = markets.size();
    g.icir.assign(n, std::vector<std::optional<double>>(n));
    g.errors.assign(n, std::vector<std::string>(n));
    parallel_for(n * n, threads, [&](std::size_t cell) {
        const std::size_t s = cell / n, t = cell % n;
        try {
            g.icir[s][t] = pair_icir(markets[s], markets[t]);
        } catch (const std::exception& e) {
            g.errors[s][t] = e.what();
        }
    });
    for (std::size_t t = 0; t < n; ++t) {
        TargetGain tg;
        tg.target = markets[t];
        tg.domestic_icir = g.icir[t][t];
        for (std::size_t s = 0; s < n; ++s) {
            if (s == t || !g.icir[s][t])
                continue;
            if (!tg.best_icir || *g.icir[s][t] > *tg.best_icir) {
                tg.best_icir = g.icir[s][t];
                tg.best_source = markets[s];
            }
        }
        if (tg.best_icir && tg.domestic_icir)
            tg.gain = *tg.best_icir - *tg.domestic_icir;
        g.gains.push_back(tg);
    }
    return g;
}

}  // namespace xmf
