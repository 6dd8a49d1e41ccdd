#include "xmf/config.hpp"

#include <doctest.h>

using namespace xmf;

TEST_SUITE("config")
{
    TEST_CASE("defaults")
    {
        RunConfig c;
        CHECK(c.dim == 128);
        CHECK(c.kappa == 50.0);
        CHECK(c.tau == 0.99);
        CHECK(c.lookback == 12);
        CHECK(c.cost_bp == 2.0);
        CHECK(c.threshold == 0.03);
        CHECK(c.ks == std::vector<std::size_t>{10, 20, 30, 60});
        CHECK(c.null_draws == 200);
        CHECK(c.bootstrap_draws == 2000);
        CHECK(c.sweep_dims == std::vector<int>{64, 128, 256, 512, 768, 1024});
        CHECK(c.sweep_lookbacks == std::vector<int>{1, 3, 6, 12, 24, 36});
    }

    TEST_CASE("key-value parsing, comments and overrides")
    {
        const auto kv = KeyValues::parse("# comment\n dim = 64 \nlookback=6 # trailing\n\nk = 5, 10\nvariant = strict\n"
                                         "firms = data/firms.csv\nexclude_markets = US, JP\n");
        CHECK(kv.get("dim") == "64");
        CHECK(kv.get("lookback") == "6");
        RunConfig c;
        c.apply(kv, "/base");
        CHECK(c.dim == 64);
        CHECK(c.lookback == 6);
        CHECK(c.ks == std::vector<std::size_t>{5, 10});
        CHECK(c.variant == FactorVariant::strict);
        CHECK(c.firms == std::filesystem::path("/base/data/firms.csv"));
        CHECK(c.excluded_markets == std::set<Market>{Market::US, Market::JP});

        KeyValues flags;
        flags.set("dim", "256");
        c.apply(flags);
        CHECK(c.dim == 256);
        CHECK(c.lookback == 6);
    }

    TEST_CASE("bad input is rejected")
    {
        RunConfig c;
        CHECK_THROWS_AS(c.apply(KeyValues::parse("colour = red\n")), Error);
        CHECK_THROWS_AS(c.apply(KeyValues::parse("dim = many\n")), Error);
        CHECK_THROWS_AS(c.apply(KeyValues::parse("source = XX\n")), Error);
        CHECK_THROWS_AS(KeyValues::parse("no equals sign here\n"), Error);
    }

    TEST_CASE("resolved config omits output location and threads")
    {
        RunConfig a, b;
        b.out = "elsewhere";
        b.threads = 8;
        CHECK(a.resolved() == b.resolved());
        b.seed = 1;
        CHECK(a.resolved() != b.resolved());
        CHECK(a.resolved().at("exclude_markets") == "home");
    }

    TEST_CASE("synth spec from key-value text")
    {
        const auto kv = KeyValues::parse(
            "markets = US:50, JP:40:0.05\nmonths = 24\nlead_source = US\nlead_target = JP\nlag_months = 2\n"
            "pair_correlation = 0.3\nseed = 9\n");
        const auto s = synth_spec_from(kv);
        REQUIRE(s.markets.size() == 2);
        CHECK(s.markets[1].firms == 40);
        CHECK(s.markets[1].holiday_rate == 0.05);
        CHECK(s.months == 24);
        CHECK(s.lag_months == 2);
        CHECK(s.seed == 9);
        REQUIRE(s.sigma);
        CHECK(*s.sigma == doctest::Approx(sigma_for_correlation(s, 0.3)));
        CHECK_THROWS_AS(synth_spec_from(KeyValues::parse("markets = US\n")), Error);
    }

    TEST_CASE("list splitting")
    {
        CHECK(split_list(" a, b ,c ") == std::vector<std::string>{"a", "b", "c"});
        CHECK(split_list("").empty());
    }
}
