#include "fixtures.hpp"
#include "oracles.hpp"

#include "xmf/graph_builder.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace xmf;
using namespace fixture;

namespace {

using Cats = std::vector<std::optional<Eigen::VectorXd>>;

Eigen::VectorXd vec(std::initializer_list<double> xs)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index k = 0;
    for (double x : xs)
        v(k++) = x;
    return v;
}

// Two markets with random encodings in `cats` categories.
struct World {
    std::shared_ptr<const Universe> universe;
    std::vector<ResidualEncoding> encodings;
};

World random_world(std::size_t per_market, Eigen::Index dim, std::size_t cats, std::uint64_t seed)
{
    std::vector<Firm> firms;
    for (std::size_t i = 0; i < per_market; ++i)
        firms.push_back({"U" + std::to_string(i), Market::US, "S" + std::to_string(i % 3), true});
    for (std::size_t i = 0; i < per_market; ++i)
        firms.push_back({"J" + std::to_string(i), Market::JP, "S" + std::to_string(i % 3), true});
    World w{universe(firms), {}};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    for (std::size_t c = 0; c < cats; ++c) {
        ResidualEncoding e;
        e.category = std::string(kSchemaCategories[c]);
        e.vectors.resize(static_cast<Eigen::Index>(firms.size()), dim);
        for (std::size_t i = 0; i < firms.size(); ++i) {
            e.firm_ids.push_back(firms[i].id);
            for (Eigen::Index k = 0; k < dim; ++k)
                e.vectors(static_cast<Eigen::Index>(i), k) = z(rng);
        }
        w.encodings.push_back(std::move(e));
    }
    return w;
}

}  // namespace

TEST_SUITE("graph_builder")
{
    TEST_CASE("pair score examples")
    {
        const auto a = vec({1, 2, 3});
        Cats same(10, a);
        CHECK(pair_score(same, same).score == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(pair_score(same, same).categories_used == 10);

        Cats x(10, vec({1, 0})), y(10, vec({0, 5}));
        CHECK(pair_score(x, y).score == 0.0);

        // cos = 0.8 and 0.2 over two shared categories.
        Cats p{vec({1, 0}), vec({1, 0}), std::nullopt};
        Cats q{vec({0.8, 0.6}), vec({0.2, std::sqrt(1 - 0.04)}), vec({1, 1})};
        const auto s = pair_score(p, q);
        CHECK(s.score == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(s.categories_used == 2);
        CHECK(s.low_confidence());

        Cats zero{vec({0, 0}), vec({1, 0})};
        Cats other{vec({1, 0}), vec({-1, 0})};
        CHECK(pair_score(zero, other).score == -1.0);
        CHECK(pair_score(zero, other).categories_used == 1);

        Cats none{std::nullopt};
        Cats some{vec({1.0})};
        CHECK(std::isnan(pair_score(none, some).score));
    }

    TEST_CASE("graph scores are symmetric, scale invariant and dense")
    {
        auto w = random_world(12, 6, 4, 3);
        EncodingStore store(*w.universe, w.encodings);
        const auto g = build_graph(store, *w.universe, Market::US, Market::JP);
        const auto h = build_graph(store, *w.universe, Market::JP, Market::US);
        CHECK(g.pair_count() == 144);
        for (std::size_t t = 0; t < 12; ++t)
            for (std::size_t s = 0; s < 12; ++s) {
                CHECK(std::abs(g.score(t, s) - h.score(s, t)) < 1e-12);
                CHECK(std::isfinite(g.score(t, s)));
            }

        auto scaled = w.encodings;
        scaled[1].vectors.row(3) *= 17.5;
        scaled[2].vectors.row(20) *= 0.01;
        EncodingStore store2(*w.universe, scaled);
        const auto g2 = build_graph(store2, *w.universe, Market::US, Market::JP);
        for (std::size_t k = 0; k < g.scores.size(); ++k)
            CHECK(std::abs(g.scores[k] - g2.scores[k]) < 1e-12);

        // The store agrees with the span overload.
        const FirmIndex i = 13, j = 2;
        Cats zi, zj;
        for (const auto& e : w.encodings) {
            zi.push_back(e.vectors.row(i).transpose());
            zj.push_back(e.vectors.row(j).transpose());
        }
        CHECK(pair_score(store, i, j).score == doctest::Approx(pair_score(zi, zj).score).epsilon(1e-12));

        const auto dom = build_graph(store, *w.universe, Market::US, Market::US);
        for (std::size_t t = 0; t < 12; ++t)
            CHECK(std::isnan(dom.score(t, t)));
        CHECK_THROWS_AS(build_graph(store, *w.universe, Market::US, Market::KR), Error);
    }

    TEST_CASE("sigmoid constants")
    {
        CHECK(sigmoid_weight(0.99) == 0.5);
        CHECK(std::abs(sigmoid_weight(0.999) - 0.6106) < 1e-4);
        CHECK(sigmoid_weight(0.999) == doctest::Approx(oracle::logistic(0.999)).epsilon(1e-15));
        CHECK(sigmoid_weight(0.5, {10.0, 0.5}) == 0.5);
    }

    TEST_CASE("percentile ranks use mean ranks for ties and skip missing")
    {
        const std::vector<double> s{0.3, 0.1, kMissing, 0.3, 0.5};
        const auto r = percentile_ranks(s);
        CHECK(r[1] == 0.25);
        CHECK(r[0] == 0.625);
        CHECK(r[3] == 0.625);
        CHECK(r[4] == 1.0);
        CHECK(std::isnan(r[2]));

        std::mt19937_64 rng(1);
        std::uniform_int_distribution<int> u(0, 20);
        std::vector<double> x(200);
        for (auto& v : x)
            v = u(rng);
        const auto got = percentile_ranks(x);
        const auto want = oracle::rank_vector(x);
        for (std::size_t k = 0; k < x.size(); ++k)
            CHECK(got[k] == doctest::Approx(want[k] / 200.0).epsilon(1e-14));
    }

    TEST_CASE("sigmoid weights are monotone in score and flag single peers")
    {
        SimilarityGraph g;
        g.targets = {0, 1, 2};
        g.sources = {3, 4, 5, 6};
        g.scores = {0.1, 0.4, 0.4, 0.9,  //
                    kMissing, 0.2, kMissing, kMissing,  //
                    kMissing, kMissing, kMissing, kMissing};
        g.categories_used = {10, 10, 2, 10, 0, 1, 0, 0, 0, 0, 0, 0};
        const auto w = sigmoid_weights(g);
        CHECK(w.weight(0, 0) < w.weight(0, 1));
        CHECK(w.weight(0, 1) == w.weight(0, 2));
        CHECK(w.weight(0, 2) < w.weight(0, 3));
        CHECK(w.weight(0, 3) == doctest::Approx(oracle::logistic(1.0)));
        CHECK(w.coverage[0].low_confidence_pairs == 1);
        CHECK(w.coverage[1].single_peer);
        CHECK(w.weight(1, 1) == doctest::Approx(oracle::logistic(1.0)));
        CHECK(w.weight(1, 0) == 0.0);
        CHECK(w.coverage[2].uncovered);
        for (double a : w.alpha)
            CHECK((a == 0.0 || (a > 0.0 && a < 1.0)));
    }

    TEST_CASE("gics weights follow sector labels")
    {
        auto u = universe({{"A", Market::US, "Tech", true},
                           {"B", Market::US, "Energy", true},
                           {"C", Market::JP, "Tech", true},
                           {"D", Market::JP, "Utilities", true},
                           {"E", Market::US, "Tech", true}});
        const auto w = gics_equal_weights(*u, Market::US, Market::JP);
        CHECK(w.weight(0, 0) == 1.0);
        CHECK(w.weight(0, 1) == 0.0);
        CHECK(w.weight(0, 2) == 1.0);
        CHECK_FALSE(w.coverage[0].uncovered);
        CHECK(w.coverage[1].uncovered);
    }

    TEST_CASE("correlation weights: identical series top the ranks and overlap floor applies")
    {
        std::mt19937_64 rng(17);
        std::vector<Firm> firms{{"T", Market::JP, "S", true}, {"J2", Market::JP, "S", true}};
        for (int i = 0; i < 6; ++i)
            firms.push_back({"U" + std::to_string(i), Market::US, "S", true});
        auto u = universe(firms);
        const auto dates = weekdays(d("2020-01-01"), 300);
        std::vector<PriceRow> rows;
        const auto t = random_walk(dates.size(), rng);
        add_series(rows, "T", dates, t);
        add_series(rows, "J2", dates, random_walk(dates.size(), rng));
        add_series(rows, "U0", dates, t);
        for (int i = 1; i < 5; ++i)
            add_series(rows, "U" + std::to_string(i), dates, random_walk(dates.size(), rng));
        // U5 trades only the last 120 dates: 119 returns inside any window.
        std::vector<Date> late(dates.end() - 120, dates.end());
        add_series(rows, "U5", late, random_walk(late.size(), rng));
        PricePanel p(u, rows);

        const Date as_of = dates.back();
        const auto g = correlation_graph(p, Market::US, Market::JP, as_of);
        CHECK(g.score(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t s = 1; s < 5; ++s)
            CHECK(std::abs(g.score(0, s)) < 0.3);
        CHECK(std::isnan(g.score(0, 5)));
        const auto w = corr_weights(p, Market::US, Market::JP, as_of);
        for (std::size_t s = 1; s < 5; ++s)
            CHECK(w.weight(0, 0) > w.weight(0, s));
        CHECK(w.weight(0, 5) == 0.0);

        // 120 overlapping returns are enough.
        std::vector<Date> late121(dates.end() - 121, dates.end());
        std::vector<PriceRow> rows2;
        for (const auto& r : rows)
            if (r.firm_id != "U5")
                rows2.push_back(r);
        add_series(rows2, "U5", late121, random_walk(late121.size(), rng));
        PricePanel p2(u, rows2);
        CHECK_FALSE(std::isnan(correlation_graph(p2, Market::US, Market::JP, as_of).score(0, 5)));
    }

    TEST_CASE("correlation weights ignore data after the as-of date")
    {
        std::mt19937_64 rng(23);
        std::vector<Firm> firms;
        for (int i = 0; i < 3; ++i)
            firms.push_back({"J" + std::to_string(i), Market::JP, "S", true});
        for (int i = 0; i < 4; ++i)
            firms.push_back({"U" + std::to_string(i), Market::US, "S", true});
        auto u = universe(firms);
        const auto dates = weekdays(d("2020-01-01"), 400);
        std::vector<PriceRow> rows;
        for (const auto& f : firms)
            add_series(rows, f.id, dates, random_walk(dates.size(), rng));
        PricePanel p(u, rows);
        const Date as_of = dates[300];
        const auto q = p.with_perturbed_prices(dates[301], 5);
        const auto a = corr_weights(p, Market::US, Market::JP, as_of);
        const auto b = corr_weights(q, Market::US, Market::JP, as_of);
        CHECK(a.alpha == b.alpha);
        const auto c = corr_weights(p, Market::US, Market::JP, dates[390]);
        CHECK(a.alpha != c.alpha);
    }

    TEST_CASE("top-k neighbours exclude markets and break ties by id")
    {
        auto u = universe({{"SRC", Market::US, "S", true},
                           {"US1", Market::US, "S", true},
                           {"JP1", Market::JP, "S", true},
                           {"JP0", Market::JP, "S", true},
                           {"KR1", Market::KR, "S", true},
                           {"HK1", Market::HK, "S", true}});
        ResidualEncoding e;
        e.category = "core_technologies";
        e.firm_ids = {"SRC", "US1", "JP1", "JP0", "KR1", "HK1"};
        e.vectors.resize(6, 2);
        e.vectors << 1, 0,  //
            1, 0,           //
            1, 1,           //
            1, 1,           //
            1, 0.1,         //
            -1, 0;
        EncodingStore store(*u, {e});
        const auto nl = top_k_neighbors(store, *u, 0, 3, {Market::US});
        REQUIRE(nl.neighbors.size() == 3);
        CHECK(nl.neighbors[0].firm == 4);
        CHECK(nl.neighbors[1].firm == 3);  // JP0 before JP1 on the tie
        CHECK(nl.neighbors[2].firm == 2);
        CHECK_FALSE(nl.fewer_than_k);
        const auto all = top_k_neighbors(store, *u, 0, 10, {Market::US});
        CHECK(all.fewer_than_k);
        CHECK(all.neighbors.size() == 4);
        const auto with_home = top_k_neighbors(store, *u, 0, 1, {});
        CHECK(with_home.neighbors[0].firm == 1);
    }

    TEST_CASE("graph binary round trip")
    {
        auto w = random_world(9, 5, 3, 8);
        EncodingStore store(*w.universe, w.encodings);
        const auto g = build_graph(store, *w.universe, Market::JP, Market::US);
        const auto pw = sigmoid_weights(g);
        const auto dir = std::filesystem::temp_directory_path() / "xmf_graph_test";
        std::filesystem::create_directories(dir);
        write_graph_binary(g, pw, *w.universe, dir / "g.bin");
        write_graph_csv(g, pw, *w.universe, dir / "g.csv");
        const auto back = read_graph_binary(*w.universe, dir / "g.bin");
        CHECK(back.graph.source == Market::JP);
        CHECK(back.graph.targets == g.targets);
        CHECK(back.graph.sources == g.sources);
        CHECK(back.graph.scores == g.scores);
        CHECK(back.weights.alpha == pw.alpha);
        std::ifstream f(dir / "g.csv");
        std::string header;
        std::getline(f, header);
        CHECK(header == "target_id,source_id,score,alpha");
        std::size_t lines = 0;
        for (std::string l; std::getline(f, l);)
            ++lines;
        CHECK(lines == 81);
    }
}
