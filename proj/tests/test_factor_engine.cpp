#include "fixtures.hpp"
#include "oracles.hpp"

#include "xmf/factor_engine.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <random>

using namespace xmf;
using namespace fixture;

namespace {

// One JP target and `n_src` US sources with daily prices over `days` weekdays.
struct Small {
    std::shared_ptr<const Universe> universe;
    std::vector<Date> dates;
    std::vector<PriceRow> rows;
};

Small two_market(std::size_t n_target, std::size_t n_src, std::size_t days, std::uint64_t seed)
{
    std::vector<Firm> firms;
    for (std::size_t i = 0; i < n_target; ++i)
        firms.push_back({"J" + std::to_string(i), Market::JP, "S" + std::to_string(i % 3), true});
    for (std::size_t i = 0; i < n_src; ++i)
        firms.push_back({"U" + std::to_string(i), Market::US, "S" + std::to_string(i % 3), true});
    Small s{universe(firms), weekdays(d("2018-01-01"), days), {}};
    std::mt19937_64 rng(seed);
    for (const auto& f : firms)
        add_series(s.rows, f.id, s.dates, random_walk(days, rng), {}, 1e6 * (1.0 + static_cast<double>(rng() % 100)));
    return s;
}

PeerWeights manual_weights(const Universe& u, std::vector<double> alpha)
{
    PeerWeights w;
    w.source = Market::US;
    w.target = Market::JP;
    w.targets = u.members(Market::JP);
    w.sources = u.members(Market::US);
    w.alpha = std::move(alpha);
    w.coverage.assign(w.targets.size(), {});
    return w;
}

double sector_mean_abs_max(const std::vector<double>& r, const std::vector<int>& sec)
{
    double worst = 0.0;
    const int ns = *std::max_element(sec.begin(), sec.end()) + 1;
    for (int s = 0; s < ns; ++s) {
        std::vector<double> v;
        for (std::size_t k = 0; k < r.size(); ++k)
            if (sec[k] == s)
                v.push_back(r[k]);
        if (!v.empty())
            worst = std::max(worst, std::abs(oracle::mean(v)));
    }
    return worst;
}

double standardized_cov(const std::vector<double>& r, const std::vector<double>& x)
{
    const double mx = oracle::mean(x), sx = oracle::sd(x);
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < r.size(); ++k)
        rows.push_back({r[k], (x[k] - mx) / sx});
    return oracle::covariance(rows, 0, 1);
}

}  // namespace

TEST_SUITE("factor_engine")
{
    TEST_CASE("factor is the weighted mean of peers' sector-relative returns through M-1")
    {
        auto s = two_market(2, 10, 21 * 16, 1);
        PricePanel p(s.universe, s.rows);
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        std::vector<double> alpha(20);
        for (auto& a : alpha)
            a = u01(rng);
        alpha[10 + 4] = 0.0;  // target 1 ignores source 4
        const auto w = manual_weights(*s.universe, alpha);
        const Month m = Month::from_ym(2019, 2);
        const auto f = compute_factor(w, p, m, 12);
        REQUIRE(f.firms.size() == 2);
        for (std::size_t t = 0; t < 2; ++t) {
            std::vector<double> ws, xs;
            for (std::size_t j = 0; j < 10; ++j) {
                ws.push_back(alpha[t * 10 + j]);
                xs.push_back(*p.sector_relative_return(w.sources[j], m - 1, 12).value);
            }
            CHECK(std::abs(f.values[t] - oracle::weighted_mean(ws, xs)) < 1e-14);
        }
    }

    TEST_CASE("single and symmetric peers")
    {
        // Two sectors in the source market so sector-relative returns are controllable.
        auto u = universe({{"T", Market::JP, "A", true},
                           {"P", Market::US, "A", true},
                           {"Q", Market::US, "A", true},
                           {"R", Market::US, "B", true}});
        const std::vector<Date> dates{d("2020-01-31"), d("2020-02-03")};
        std::vector<PriceRow> rows;
        add_series(rows, "T", dates, {100, 100});
        add_series(rows, "P", dates, {100, 104});
        add_series(rows, "Q", dates, {100, 100});
        add_series(rows, "R", dates, {100, 100});
        PricePanel p(u, rows);
        const Month mar = Month::from_ym(2020, 3);
        auto one = manual_weights(*u, {1.0, 0.0, 0.0});
        CHECK(compute_factor(one, p, mar, 1).values.at(0) == doctest::Approx(0.02).epsilon(1e-12));
        auto two = manual_weights(*u, {0.5, 0.5, 0.0});
        CHECK(std::abs(compute_factor(two, p, mar, 1).values.at(0)) < 1e-15);
        auto none = manual_weights(*u, {0.0, 0.0, 0.0});
        CHECK(compute_factor(none, p, mar, 1).firms.empty());
    }

    TEST_CASE("positive affine maps of peer returns map factors the same way")
    {
        // Weighted means commute with affine maps; check against the oracle directly.
        std::mt19937_64 rng(8);
        std::normal_distribution<double> z;
        std::vector<double> w(30), x(30), y(30);
        for (std::size_t k = 0; k < 30; ++k) {
            w[k] = std::abs(z(rng));
            x[k] = z(rng);
            y[k] = 3.0 * x[k] - 0.4;
        }
        CHECK(oracle::weighted_mean(w, y) == doctest::Approx(3.0 * oracle::weighted_mean(w, x) - 0.4).epsilon(1e-12));
    }

    TEST_CASE("dropping a negligible peer barely moves the factor")
    {
        auto s = two_market(1, 8, 21 * 15, 3);
        PricePanel p(s.universe, s.rows);
        std::vector<double> a{0.7, 0.2, 0.9, 0.5, 0.3, 0.6, 0.4, 5e-7};
        auto b = a;
        b[7] = 0.0;
        const Month m = Month::from_ym(2019, 3);
        double maxr = 0.0;
        for (FirmIndex f : s.universe->members(Market::US))
            maxr = std::max(maxr, std::abs(*p.sector_relative_return(f, m - 1, 12).value));
        const double fa = compute_factor(manual_weights(*s.universe, a), p, m, 12).values[0];
        const double fb = compute_factor(manual_weights(*s.universe, b), p, m, 12).values[0];
        CHECK(std::abs(fa - fb) < 1e-4 * maxr);
    }

    TEST_CASE("neutralization removes sector means and size exposure")
    {
        std::mt19937_64 rng(12);
        std::normal_distribution<double> z;
        const std::size_t n = 50;
        std::vector<double> f(n), cap(n);
        std::vector<int> sec(n);
        for (std::size_t k = 0; k < n; ++k) {
            sec[k] = static_cast<int>(k % 5);
            cap[k] = 20.0 + 2.0 * z(rng) + 0.3 * sec[k];
            f[k] = z(rng) + 0.5 * cap[k] + sec[k];
        }
        const auto r = neutralize(f, sec, cap);
        CHECK(sector_mean_abs_max(r.residuals, sec) < 1e-10);
        CHECK(std::abs(standardized_cov(r.residuals, cap)) < 1e-10);
        CHECK(r.report.n_used == 50);
        CHECK(r.report.size_beta > 0.0);

        // Normal equations of the joint regression on sector dummies and size.
        Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 6);
        X.setZero();
        for (std::size_t k = 0; k < n; ++k) {
            X(static_cast<Eigen::Index>(k), sec[k]) = 1.0;
            X(static_cast<Eigen::Index>(k), 5) = cap[k];
        }
        Eigen::VectorXd e = Eigen::Map<const Eigen::VectorXd>(r.residuals.data(), static_cast<Eigen::Index>(n));
        CHECK((X.transpose() * e).cwiseAbs().maxCoeff() < 1e-9);
    }

    TEST_CASE("neutralization edge cases")
    {
        // Orthogonal to sector and size: the residual is the z-scored factor.
        const std::vector<double> f{1, -1, 1, -1, 2, -2};
        const std::vector<int> sec{0, 0, 0, 0, 0, 0};
        const std::vector<double> cap{5, 5, 7, 7, 6, 6};
        const auto r = neutralize(f, sec, cap);
        CHECK(r.report.single_sector);
        CHECK(std::abs(r.report.size_beta) < 1e-15);
        const double sd = oracle::sd(f);
        for (std::size_t k = 0; k < f.size(); ++k)
            CHECK(r.residuals[k] == doctest::Approx(f[k] / sd).epsilon(1e-12));

        // Factor equal to log cap: residual vanishes.
        const std::vector<double> c2{3.1, 4.7, 5.2, 6.9, 2.2, 8.0};
        const std::vector<int> s2{0, 1, 0, 1, 0, 1};
        for (double v : neutralize(c2, s2, c2).residuals)
            CHECK(std::abs(v) < 1e-12);

        // Constant within sectors: zero variance after demeaning.
        const std::vector<double> f3{1, 1, 2, 2};
        const auto d3 = neutralize(f3, std::vector<int>{0, 0, 1, 1}, std::vector<double>{1, 2, 3, 4});
        CHECK(d3.report.degenerate);
        for (double v : d3.residuals)
            CHECK(v == 0.0);

        CHECK_THROWS_AS(neutralize(std::vector<double>{1, 2}, std::vector<int>{0, 0}, std::vector<double>{1, 2}),
                        Error);
    }

    TEST_CASE("strict neutralization drops collinear industry momentum")
    {
        std::mt19937_64 rng(31);
        std::normal_distribution<double> z;
        const std::size_t n = 120;
        std::vector<double> f(n), cap(n), ind(n), own(n);
        std::vector<int> sec(n);
        std::vector<double> sector_level{0.02, -0.01, 0.05, 0.0};
        for (std::size_t k = 0; k < n; ++k) {
            sec[k] = static_cast<int>(k % 4);
            cap[k] = z(rng);
            ind[k] = sector_level[static_cast<std::size_t>(sec[k])];
            own[k] = z(rng);
            f[k] = z(rng) + own[k] + 0.2 * cap[k];
        }
        f[0] = 50.0;  // an outlier for the winsoriser
        const auto r = strict_neutralize(f, sec, cap, ind, own);
        REQUIRE(r.dropped_columns.size() == 1);
        CHECK(r.dropped_columns[0] == "industry_momentum");
        auto sorted = f;
        std::sort(sorted.begin(), sorted.end());
        const double h = 0.99 * static_cast<double>(n - 1);
        const auto lo = static_cast<std::size_t>(h);
        CHECK(r.winsor_high == doctest::Approx(sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo])));
        CHECK(r.winsor_high < 50.0);
        CHECK(sector_mean_abs_max(r.residuals, sec) < 1e-10);
        CHECK(std::abs(standardized_cov(r.residuals, cap)) < 1e-10);
        CHECK(std::abs(standardized_cov(r.residuals, own)) < 1e-10);
    }

    TEST_CASE("type-7 quantile")
    {
        CHECK(quantile({1, 2, 3, 4, 5}, 0.5) == 3.0);
        CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
        CHECK(quantile({10, 0}, 0.25) == 2.5);
        CHECK(quantile({7}, 0.99) == 7.0);
        CHECK_THROWS_AS(quantile({}, 0.5), Error);
    }

    TEST_CASE("lookahead audit passes for the real factor and catches a leak")
    {
        auto s = two_market(12, 12, 21 * 30, 5);
        PricePanel p(s.universe, s.rows);
        const auto w = gics_equal_weights(*s.universe, Market::US, Market::JP);
        std::vector<Month> months;
        for (Month m = Month::from_ym(2019, 2); m <= Month::from_ym(2020, 4); m = m + 1)
            months.push_back(m);
        for (auto variant : {FactorVariant::raw, FactorVariant::neutralized, FactorVariant::strict}) {
            const FactorBuilder honest = [&](const PricePanel& px, Month m) {
                return build_factor(w, px, m, 12, variant);
            };
            const auto v = lookahead_audit(honest, p, months, 77);
            CHECK(v.passed);
            CHECK(v.months_checked == months.size());
        }
        const FactorBuilder leaky = [&](const PricePanel& px, Month m) { return compute_factor(w, px, m + 1, 12); };
        const auto bad = lookahead_audit(leaky, p, months, 77, 2);
        CHECK_FALSE(bad.passed);
        CHECK(bad.contaminated.size() >= months.size());

        const FactorBuilder corr = [&](const PricePanel& px, Month m) {
            const auto cw = corr_weights(px, Market::US, Market::JP, m.first_day() - std::chrono::days{1});
            return build_factor(cw, px, m, 6, FactorVariant::raw);
        };
        CHECK(lookahead_audit(corr, p, std::vector<Month>{Month::from_ym(2019, 8), Month::from_ym(2020, 1)}, 3).passed);
    }

    TEST_CASE("variant names parse")
    {
        CHECK(parse_factor_variant("raw") == FactorVariant::raw);
        CHECK(parse_factor_variant("strict") == FactorVariant::strict);
        CHECK(to_string(FactorVariant::neutralized) == "neutralized");
        CHECK_THROWS_AS(parse_factor_variant("other"), Error);
    }
}
