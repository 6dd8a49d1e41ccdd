#include "xmf/pipeline.hpp"

#include "xmf/csv.hpp"
#include "xmf/manifest.hpp"
#include "xmf/parallel.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include <fmt/core.h>

namespace xmf {

namespace fs = std::filesystem;

namespace {

void require_file(const fs::path& p, std::string_view role)
{
    if (p.empty())
        throw Error(fmt::format("missing input: no {} path configured", role));
    if (!fs::exists(p))
        throw Error(fmt::format("missing input: {} '{}' does not exist", role, p.string()));
}

}  // namespace

Inputs load_inputs(const RunConfig& config, InputNeeds needs)
{
    // Check presence of everything first, so the first missing artifact is
    // named before any expensive parsing.
    require_file(config.firms, "firms");
    if (needs.prices) {
        require_file(config.prices, "prices");
        if (config.calendar)
            require_file(*config.calendar, "calendar");
    }
    if (needs.embeddings) {
        if (!config.embeddings)
            throw Error("missing input: no embeddings directory configured");
        require_file(*config.embeddings, "embeddings");
    }
    if (needs.agent_labels && config.agent_labels)
        require_file(*config.agent_labels, "agent_labels");
    if (needs.agent_labels && config.source_firms)
        require_file(*config.source_firms, "source_firms");

    Inputs in;
    in.universe = std::make_shared<const Universe>(Universe::load(config.firms));
    in.hashes["firms"] = sha256_file(config.firms);
    if (needs.prices) {
        in.prices = std::make_shared<const PricePanel>(PricePanel::load(in.universe, config.prices, config.calendar));
        in.hashes["prices"] = sha256_file(config.prices);
        if (config.calendar)
            in.hashes["calendar"] = sha256_file(*config.calendar);
    }
    if (needs.embeddings) {
        in.embeddings = load_embedding_dir(*config.embeddings);
        if (in.embeddings.empty())
            throw Error(fmt::format("missing input: no category files in embeddings directory '{}'",
                                    config.embeddings->string()));
        in.hashes["embeddings"] = sha256_tree(*config.embeddings);
    }
    if (needs.agent_labels && config.agent_labels) {
        in.agent_labels = AgentLabels::load(*config.agent_labels, *in.universe);
        in.hashes["agent_labels"] = sha256_file(*config.agent_labels);
    }
    if (needs.agent_labels && config.source_firms)
        in.hashes["source_firms"] = sha256_file(*config.source_firms);
    return in;
}

std::vector<ResidualEncoding> whiten_sets(const std::vector<EmbeddingSet>& sets, int dim,
                                          std::vector<WhitenModel>* models)
{
    std::vector<ResidualEncoding> out;
    for (const auto& set : sets) {
        auto model = fit_whitener(set, dim);
        out.push_back(whiten_all(model, set));
        if (models)
            models->push_back(std::move(model));
    }
    return out;
}

std::shared_ptr<const EncodingStore> encode(const Inputs& inputs, int dim)
{
    return std::make_shared<const EncodingStore>(*inputs.universe, whiten_sets(inputs.embeddings, dim));
}

PeerWeights shuffle_sources(const PeerWeights& weights, std::uint64_t seed)
{
    const std::size_t ns = weights.sources.size();
    std::vector<std::size_t> perm(ns);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, 0x5u));
    for (std::size_t k = ns; k > 1; --k)
        std::swap(perm[k - 1], perm[uniform_below(rng, k)]);
    PeerWeights out = weights;
    for (std::size_t t = 0; t < weights.targets.size(); ++t)
        for (std::size_t s = 0; s < ns; ++s)
            out.alpha[t * ns + s] = weights.alpha[t * ns + perm[s]];
    return out;
}

PeerWeights static_weights(const RunConfig& config, const Inputs& inputs, const EncodingStore* store, Market source,
                           Market target, SimilarityGraph* graph_out)
{
    PeerWeights w;
    switch (config.scheme) {
    case PeerScheme::text_sigmoid: {
        if (!store)
            throw Error("text peer scheme needs embeddings");
        auto graph = build_graph(*store, *inputs.universe, source, target, config.threads);
        w = sigmoid_weights(graph, SigmoidParams{config.kappa, config.tau});
        if (graph_out)
            *graph_out = std::move(graph);
        break;
    }
    case PeerScheme::gics_equal:
        w = gics_equal_weights(*inputs.universe, source, target);
        break;
    case PeerScheme::corr_sigmoid:
        throw Error("correlation weights depend on the month; use factor_builder");
    }
    return config.shuffle_graph ? shuffle_sources(w, config.seed) : w;
}

FactorBuilder factor_builder(const RunConfig& config, const Inputs& inputs,
                             std::shared_ptr<const EncodingStore> store, Market source, Market target, int lookback,
                             FactorVariant variant)
{
    if (config.scheme == PeerScheme::corr_sigmoid) {
        const CorrelationParams corr{config.corr_window, config.corr_min_overlap};
        const SigmoidParams sig{config.kappa, config.tau};
        const bool shuffle = config.shuffle_graph;
        const std::uint64_t seed = config.seed;
        return [=](const PricePanel& prices, Month month) {
            const Date as_of = month.first_day() - std::chrono::days{1};
            auto w = corr_weights(prices, source, target, as_of, corr, sig, 1);
            if (shuffle)
                w = shuffle_sources(w, seed);
            return build_factor(w, prices, month, lookback, variant);
        };
    }
    auto weights = std::make_shared<const PeerWeights>(static_weights(config, inputs, store.get(), source, target));
    return [weights, lookback, variant](const PricePanel& prices, Month month) {
        return build_factor(*weights, prices, month, lookback, variant);
    };
}

std::vector<Month> factor_months(const RunConfig& config, const PricePanel& prices, int lookback)
{
    Month first = prices.first_month() + lookback;
    Month last = prices.last_month();
    if (config.start && *config.start > first)
        first = *config.start;
    if (config.end && *config.end < last)
        last = *config.end;
    std::vector<Month> out;
    for (Month m = first; m <= last; m = m + 1)
        out.push_back(m);
    if (out.empty())
        throw Error(fmt::format("no factor months: panel spans {}..{} with lookback {}",
                                format_month(prices.first_month()), format_month(prices.last_month()), lookback));
    return out;
}

std::vector<FactorPanel> factor_series(const FactorBuilder& builder, const PricePanel& prices,
                                       const std::vector<Month>& months, unsigned threads)
{
    std::vector<FactorPanel> out(months.size());
    parallel_for(months.size(), threads, [&](std::size_t k) { out[k] = builder(prices, months[k]); });
    return out;
}

std::string factors_to_csv(const std::vector<FactorPanel>& factors, const Universe& universe)
{
    std::string out = "month,firm_id,value\n";
    for (const auto& p : factors)
        for (std::size_t k = 0; k < p.firms.size(); ++k)
            out += fmt::format("{},{},{}\n", format_month(p.month), universe.firm(p.firms[k]).id, p.values[k]);
    return out;
}

std::vector<FactorPanel> factors_from_csv(const fs::path& path, const Universe& universe, const FactorPanel& header)
{
    const auto t = csv::read(path);
    const auto cm = t.column("month");
    const auto cf = t.column("firm_id");
    const auto cv = t.column("value");
    std::map<Month, std::vector<std::pair<FirmIndex, double>>> by_month;
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        by_month[parse_month(t.rows[r][cm])].emplace_back(universe.require(t.rows[r][cf]),
                                                         csv::to_double(t.rows[r][cv], t, r));
    std::vector<FactorPanel> out;
    for (auto& [m, entries] : by_month) {
        std::sort(entries.begin(), entries.end());
        FactorPanel p = header;
        p.month = m;
        p.firms.clear();
        p.values.clear();
        for (const auto& [f, v] : entries) {
            p.firms.push_back(f);
            p.values.push_back(v);
        }
        out.push_back(std::move(p));
    }
    return out;
}

PairRun run_pair(const RunConfig& config, const Inputs& inputs, std::shared_ptr<const EncodingStore> store,
                 Market source, Market target, int lookback)
{
    const auto builder = factor_builder(config, inputs, std::move(store), source, target, lookback, config.variant);
    PairRun run;
    run.factors =
        factor_series(builder, *inputs.prices, factor_months(config, *inputs.prices, lookback), config.threads);
    run.backtest = run_backtest(run.factors, *inputs.prices, config.cost_bp);
    return run;
}

GeographyMatrix run_geography(const RunConfig& config, const Inputs& inputs,
                              std::shared_ptr<const EncodingStore> store)
{
    RunConfig inner = config;
    inner.threads = 1;
    return geography_matrix(
        config.markets,
        [&](Market s, Market t) { return run_pair(inner, inputs, store, s, t, config.lookback).backtest.metrics.icir; },
        config.threads);
}

std::vector<SweepRow> run_sweep(const RunConfig& config, const Inputs& inputs)
{
    std::vector<SweepRow> rows;
    auto evaluate = [&](SweepRow row, int dim, int lookback) {
        try {
            std::shared_ptr<const EncodingStore> store;
            if (config.scheme == PeerScheme::text_sigmoid)
                store = encode(inputs, dim);
            const auto run = run_pair(config, inputs, store, config.source, config.target, lookback);
            row.icir = run.backtest.metrics.icir;
            row.sharpe = run.backtest.metrics.sharpe;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    };
    if (config.scheme == PeerScheme::text_sigmoid)
        for (int d : config.sweep_dims)
            evaluate(SweepRow{"dim", d, {}, {}, {}}, d, config.lookback);
    for (int l : config.sweep_lookbacks)
        evaluate(SweepRow{"lookback", l, {}, {}, {}}, config.dim, l);
    return rows;
}

EventConfig event_config(const RunConfig& config, const PricePanel& prices)
{
    EventConfig ec;
    ec.threshold = config.threshold;
    ec.ks = config.ks;
    ec.null_draws = config.null_draws;
    ec.bootstrap_draws = config.bootstrap_draws;
    ec.seed = config.seed;
    ec.excluded_markets = config.excluded_markets;
    ec.window_years = config.window_years;
    ec.min_confidence = config.min_confidence;
    ec.threads = config.threads;
    const Market m = config.event_market.value_or(config.source);
    const auto& cal = prices.calendar(m);
    if (cal.dates.empty())
        throw Error(fmt::format("market {} has no trading dates", to_string(m)));
    ec.start = config.event_start.value_or(cal.dates.front());
    ec.end = config.event_end.value_or(cal.dates.back());
    return ec;
}

EventReport run_events(const RunConfig& config, const Inputs& inputs, const EncodingStore& store)
{
    const Market m = config.event_market.value_or(config.source);
    std::vector<FirmIndex> sources = inputs.universe->members(m);
    if (config.source_firms) {
        const auto t = csv::read(*config.source_firms);
        const auto col = t.has_column("firm_id") ? t.column("firm_id") : t.column("source_id");
        std::set<FirmIndex> picked;
        for (const auto& row : t.rows)
            picked.insert(inputs.universe->require(row[col]));
        sources.assign(picked.begin(), picked.end());
    }
    if (sources.empty())
        throw Error(fmt::format("market {} has no firms to trace events from", to_string(m)));
    return run_event_study(*inputs.prices, store, sources, inputs.agent_labels ? &*inputs.agent_labels : nullptr,
                           event_config(config, *inputs.prices));
}

AuditVerdict run_audit(const RunConfig& config, const Inputs& inputs, std::shared_ptr<const EncodingStore> store)
{
    const auto builder =
        factor_builder(config, inputs, std::move(store), config.source, config.target, config.lookback, config.variant);
    const auto months = factor_months(config, *inputs.prices, config.lookback);
    return lookahead_audit(builder, *inputs.prices, months, config.seed, config.threads);
}

}  // namespace xmf
