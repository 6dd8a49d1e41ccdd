// xmf: command-line entry point for the cross-market factor engine.

#include "xmf/config.hpp"
#include "xmf/csv.hpp"
#include "xmf/manifest.hpp"
#include "xmf/pipeline.hpp"
#include "xmf/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/core.h>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace xmf;

namespace {

json num(std::optional<double> x)
{
    if (!x || std::isnan(*x))
        return nullptr;
    return *x;
}

json num(double x) { return num(std::optional<double>(x)); }

/// Flag values collected per subcommand; only flags the user passed are
/// applied, so config-file values survive otherwise.
struct Flags {
    std::string config, manifest;
    // deques keep element addresses stable for CLI11's bindings
    std::deque<std::pair<std::string, std::string>> bound;
    std::deque<std::pair<std::string, bool>> switches;

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help)
    {
        auto& slot = bound.emplace_back(key, std::string{});
        app->add_option(flag, slot.second, help);
    }
    void add_switch(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help)
    {
        auto& slot = switches.emplace_back(key, false);
        app->add_flag(flag, slot.second, help);
    }
    KeyValues overrides() const
    {
        KeyValues kv;
        for (const auto& [key, value] : bound)
            if (!value.empty())
                kv.set(key, value);
        for (const auto& [key, on] : switches)
            if (on)
                kv.set(key, "true");
        return kv;
    }
};

void add_common(CLI::App* app, Flags& f)
{
    app->add_option("--config", f.config, "key = value configuration file");
    app->add_option("--manifest", f.manifest, "rerun with the configuration recorded in a manifest");
    f.add(app, "--source", "source", "source market");
    f.add(app, "--target", "target", "target market");
    f.add(app, "--dim", "dim", "whitened dimension d");
    f.add(app, "--lookback", "lookback", "lookback L in months");
    f.add(app, "--variant", "variant", "raw, neutralized or strict");
    f.add(app, "--cost-bp", "cost_bp", "one-way cost in basis points");
    f.add(app, "--k", "k", "basket sizes, comma separated");
    f.add(app, "--seed", "seed", "master seed");
    f.add(app, "--out", "out", "output directory");
    f.add(app, "--threads", "threads", "worker threads");
    f.add(app, "--scheme", "scheme", "text_sigmoid, gics_equal or corr_sigmoid");
    f.add(app, "--firms", "firms", "firms.csv");
    f.add(app, "--prices", "prices", "prices.csv");
    f.add(app, "--calendar", "calendar", "calendar.csv");
    f.add(app, "--embeddings", "embeddings", "embedding directory");
    f.add(app, "--agent-labels", "agent_labels", "agent label JSON file");
    f.add(app, "--markets", "markets", "markets for the geography matrix");
    f.add(app, "--source-firms", "source_firms", "CSV of event source firm ids");
    f.add(app, "--event-market", "event_market", "market whose firms trigger events");
    f.add(app, "--null-draws", "null_draws", "random baskets per event");
    f.add(app, "--bootstrap-draws", "bootstrap_draws", "cluster bootstrap draws");
    f.add(app, "--start", "start", "first factor month YYYY-MM");
    f.add(app, "--end", "end", "last factor month YYYY-MM");
    f.add_switch(app, "--shuffle-graph", "shuffle_graph", "permute source firms in the peer weights");
}

RunConfig resolve(const Flags& f)
{
    RunConfig cfg;
    if (!f.manifest.empty()) {
        auto m = Manifest::load(f.manifest);
        if (!m)
            throw Error(fmt::format("cannot read manifest '{}'", f.manifest));
        KeyValues kv;
        for (const auto& [k, v] : m->config)
            kv.set(k, v);
        cfg.apply(kv);
    }
    if (!f.config.empty()) {
        const fs::path p(f.config);
        cfg.apply(KeyValues::load(p), p.parent_path());
    }
    cfg.apply(f.overrides());
    return cfg;
}

json config_json(const RunConfig& cfg)
{
    json j = json::object();
    for (const auto& [k, v] : cfg.resolved())
        j[k] = v;
    return j;
}

/// Writes report files atomically, then the command's manifest.
class Outputs {
public:
    Outputs(const RunConfig& cfg, std::string command, std::map<std::string, std::string> inputs)
        : dir_(cfg.out)
    {
        fs::create_directories(dir_);
        manifest_.command = std::move(command);
        manifest_.seed = cfg.seed;
        manifest_.config = cfg.resolved();
        manifest_.inputs = std::move(inputs);
    }
    Outputs(const fs::path& dir, std::string command, std::map<std::string, std::string> config, std::uint64_t seed)
        : dir_(dir)
    {
        fs::create_directories(dir_);
        manifest_.command = std::move(command);
        manifest_.seed = seed;
        manifest_.config = std::move(config);
    }
    void write(const std::string& name, const std::string& contents)
    {
        csv::write_atomic(dir_ / name, contents);
        manifest_.outputs[name] = sha256_hex(contents);
    }
    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
    /// Moves a file written elsewhere by a library writer into place.
    void adopt(const std::string& name, const fs::path& tmp)
    {
        fs::rename(tmp, dir_ / name);
        manifest_.outputs[name] = sha256_file(dir_ / name);
    }
    void finish() { csv::write_atomic(dir_ / (manifest_.command + ".manifest.json"), manifest_.to_json()); }
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    Manifest manifest_;
};

json report_header(const std::string& command, const RunConfig& cfg, const Inputs& in)
{
    json j;
    j["command"] = command;
    j["version"] = std::string(kVersion);
    j["config"] = config_json(cfg);
    j["inputs"] = in.hashes;
    return j;
}

json metrics_json(const BacktestMetrics& m)
{
    json j;
    j["ic_mean"] = num(m.ic_mean);
    j["icir"] = num(m.icir);
    j["sharpe"] = num(m.sharpe);
    j["max_drawdown"] = num(m.max_drawdown);
    j["annual_return"] = num(m.annual_return);
    j["cumulative_return"] = num(m.cumulative_return);
    j["ic_months"] = m.ic_months;
    j["traded_months"] = m.traded_months;
    return j;
}

bool needs_text(const RunConfig& cfg) { return cfg.scheme == PeerScheme::text_sigmoid; }

std::shared_ptr<const EncodingStore> maybe_encode(const RunConfig& cfg, const Inputs& in)
{
    return needs_text(cfg) ? encode(in, cfg.dim) : nullptr;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& spec_path, const std::string& seed, const std::string& out,
              const std::string& manifest_path)
{
    KeyValues kv;
    if (!manifest_path.empty()) {
        auto m = Manifest::load(manifest_path);
        if (!m)
            throw Error(fmt::format("cannot read manifest '{}'", manifest_path));
        for (const auto& [k, v] : m->config)
            kv.set(k, v);
    }
    if (!spec_path.empty()) {
        const auto file = KeyValues::load(spec_path);
        for (const auto& [k, v] : file.values())
            kv.set(k, v);
    }
    if (!seed.empty())
        kv.set("seed", seed);
    const auto spec = synth_spec_from(kv);
    const auto world = generate(spec);
    const fs::path dir = out.empty() ? fs::path("synth") : fs::path(out);
    write_world(world, dir);

    std::map<std::string, std::string> config = kv.values();
    config["seed"] = std::to_string(spec.seed);
    Outputs outputs(dir, "synth", config, spec.seed);
    for (const char* f : {"firms.csv", "prices.csv", "calendar.csv", "truth/links.csv", "truth/event_links.csv",
                          "truth/planted_events.csv"})
        outputs.write(f, [&] {
            std::ifstream in(dir / f, std::ios::binary);
            std::stringstream ss;
            ss << in.rdbuf();
            return ss.str();
        }());
    json j;
    j["command"] = "synth";
    j["version"] = std::string(kVersion);
    j["config"] = config;
    j["firms"] = world.firms.size();
    j["price_rows"] = world.prices.size();
    j["categories"] = world.embeddings.size();
    j["planted_links"] = world.links.size();
    j["event_links"] = world.event_links.size();
    j["planted_events"] = world.events.size();
    j["sigma"] = num(spec.sigma);
    j["embeddings_sha256"] = sha256_tree(dir / "embeddings");
    outputs.write_json("synth.json", j);
    outputs.finish();
    std::cout << fmt::format("synth: {} firms, {} price rows, {} links, {} planted events -> {}\n",
                             world.firms.size(), world.prices.size(), world.links.size(), world.events.size(),
                             dir.string());
    return 0;
}

int cmd_graph(const RunConfig& cfg, const std::string& truth)
{
    auto in = load_inputs(cfg, {false, true, false});
    const auto store = encode(in, cfg.dim);
    SimilarityGraph graph;
    RunConfig text = cfg;
    text.scheme = PeerScheme::text_sigmoid;
    const auto weights = static_weights(text, in, store.get(), cfg.source, cfg.target, &graph);
    Outputs out(cfg, "graph", in.hashes);
    write_graph_csv(graph, weights, *in.universe, cfg.out / "graph.csv.tmp");
    out.adopt("graph.csv", cfg.out / "graph.csv.tmp");
    write_graph_binary(graph, weights, *in.universe, cfg.out / "graph.bin.tmp");
    out.adopt("graph.bin", cfg.out / "graph.bin.tmp");
    std::size_t uncovered = 0, single = 0, low = 0;
    for (const auto& c : weights.coverage) {
        uncovered += c.uncovered;
        single += c.single_peer;
        low += static_cast<std::size_t>(c.low_confidence_pairs);
    }
    auto j = report_header("graph", cfg, in);
    j["targets"] = graph.targets.size();
    j["sources"] = graph.sources.size();
    j["pairs"] = graph.pair_count();
    j["uncovered_targets"] = uncovered;
    j["single_peer_targets"] = single;
    j["low_confidence_pairs"] = low;
    j["unknown_embedding_ids"] = store->unknown_ids();
    if (!truth.empty()) {
        const auto links = load_truth_links(truth);
        json rec;
        for (std::size_t k : {1, 5, 10})
            rec[fmt::format("precision_at_{}", k)] = num(recovery_score(graph, *in.universe, links, k));
        j["recovery"] = rec;
    }
    out.write_json("graph.json", j);
    out.finish();
    std::cout << fmt::format("graph {}->{}: {} pairs, {} uncovered targets\n", to_string(cfg.source),
                             to_string(cfg.target), graph.pair_count(), uncovered);
    return 0;
}

/// Config keys that change factor values.
const std::vector<std::string> kFactorKeys{"firms",  "prices", "calendar",         "embeddings",  "source",
                                           "target", "dim",    "kappa",            "tau",         "lookback",
                                           "variant", "scheme", "start",           "end",         "shuffle_graph",
                                           "corr_window", "corr_min_overlap", "seed"};

std::map<std::string, std::string> factor_subset(const std::map<std::string, std::string>& config)
{
    std::map<std::string, std::string> out;
    for (const auto& k : kFactorKeys)
        if (auto it = config.find(k); it != config.end())
            out[k] = it->second;
    return out;
}

json factor_summary(const std::vector<FactorPanel>& factors)
{
    json months = json::array();
    for (const auto& p : factors) {
        json m;
        m["month"] = format_month(p.month);
        m["firms"] = p.firms.size();
        months.push_back(m);
    }
    return months;
}

InputNeeds factor_needs(const RunConfig& cfg) { return {true, needs_text(cfg), false}; }

int cmd_factor(const RunConfig& cfg)
{
    auto in = load_inputs(cfg, factor_needs(cfg));
    const auto store = maybe_encode(cfg, in);
    const auto builder = factor_builder(cfg, in, store, cfg.source, cfg.target, cfg.lookback, cfg.variant);
    const auto factors = factor_series(builder, *in.prices, factor_months(cfg, *in.prices, cfg.lookback), cfg.threads);
    Outputs out(cfg, "factor", in.hashes);
    out.write("factors.csv", factors_to_csv(factors, *in.universe));
    auto j = report_header("factor", cfg, in);
    j["months"] = factor_summary(factors);
    out.write_json("factor.json", j);
    out.finish();
    std::cout << fmt::format("factor {}->{}: {} months\n", to_string(cfg.source), to_string(cfg.target),
                             factors.size());
    return 0;
}

int cmd_backtest(const RunConfig& cfg)
{
    auto in = load_inputs(cfg, factor_needs(cfg));
    std::vector<FactorPanel> factors;
    std::string factor_origin = "computed";
    const auto manifest = Manifest::load(cfg.out / "factor.manifest.json");
    if (manifest && fs::exists(cfg.out / "factors.csv")) {
        bool same = factor_subset(manifest->config) == factor_subset(cfg.resolved());
        for (const auto& [role, hash] : in.hashes)
            if (manifest->inputs.count(role) && manifest->inputs.at(role) != hash)
                same = false;
        const auto csv_hash = sha256_file(cfg.out / "factors.csv");
        if (!manifest->outputs.count("factors.csv") || manifest->outputs.at("factors.csv") != csv_hash)
            same = false;
        if (same) {
            FactorPanel header;
            header.source = cfg.source;
            header.target = cfg.target;
            header.lookback = cfg.lookback;
            header.scheme = cfg.scheme;
            header.variant = cfg.variant;
            factors = factors_from_csv(cfg.out / "factors.csv", *in.universe, header);
            factor_origin = "reused";
        } else {
            std::cerr << "warning: factor manifest in " << cfg.out.string()
                      << " does not match this run (stale hash); recomputing factors\n";
        }
    }
    if (factor_origin == "computed") {
        const auto store = maybe_encode(cfg, in);
        const auto builder = factor_builder(cfg, in, store, cfg.source, cfg.target, cfg.lookback, cfg.variant);
        factors = factor_series(builder, *in.prices, factor_months(cfg, *in.prices, cfg.lookback), cfg.threads);
    }
    const auto report = run_backtest(factors, *in.prices, cfg.cost_bp);

    Outputs out(cfg, "backtest", in.hashes);
    std::string csv = "month,n_firms,ic,traded,gross,cost,net,long_turnover,short_turnover,delisted\n";
    for (const auto& m : report.months)
        csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", format_month(m.month), m.n_firms, m.ic, m.traded ? 1 : 0,
                           m.gross, m.cost, m.net, m.long_turnover, m.short_turnover, m.delisted_members);
    out.write("returns.csv", csv);
    auto j = report_header("backtest", cfg, in);
    j["metrics"] = metrics_json(report.metrics);
    json wealth = json::array();
    for (double v : report.wealth)
        wealth.push_back(v);
    j["wealth"] = wealth;
    out.write_json("backtest.json", j);
    out.finish();
    std::cout << fmt::format("backtest {}->{}: ICIR {} Sharpe {} (factors {})\n", to_string(cfg.source),
                             to_string(cfg.target), num(report.metrics.icir).dump(), num(report.metrics.sharpe).dump(),
                             factor_origin);
    return 0;
}

int cmd_geography(const RunConfig& cfg)
{
    auto in = load_inputs(cfg, factor_needs(cfg));
    const auto store = maybe_encode(cfg, in);
    const auto g = run_geography(cfg, in, store);
    auto j = report_header("geography", cfg, in);
    json markets = json::array();
    for (Market m : g.markets)
        markets.push_back(std::string(to_string(m)));
    j["markets"] = markets;
    json cells = json::array();
    for (std::size_t s = 0; s < g.markets.size(); ++s)
        for (std::size_t t = 0; t < g.markets.size(); ++t) {
            json c;
            c["source"] = std::string(to_string(g.markets[s]));
            c["target"] = std::string(to_string(g.markets[t]));
            c["icir"] = num(g.icir[s][t]);
            if (!g.errors[s][t].empty())
                c["error"] = g.errors[s][t];
            cells.push_back(c);
        }
    j["cells"] = cells;
    json gains = json::array();
    for (const auto& tg : g.gains) {
        json x;
        x["target"] = std::string(to_string(tg.target));
        x["best_source"] = tg.best_source ? json(std::string(to_string(*tg.best_source))) : json(nullptr);
        x["best_icir"] = num(tg.best_icir);
        x["domestic_icir"] = num(tg.domestic_icir);
        x["cross_market_gain"] = num(tg.gain);
        gains.push_back(x);
    }
    j["gains"] = gains;
    Outputs out(cfg, "geography", in.hashes);
    out.write_json("geography.json", j);
    out.finish();
    std::cout << fmt::format("geography: {} cells\n", g.markets.size() * g.markets.size());
    return 0;
}

int cmd_sweep(const RunConfig& cfg)
{
    auto in = load_inputs(cfg, factor_needs(cfg));
    const auto rows = run_sweep(cfg, in);
    auto j = report_header("sweep", cfg, in);
    json arr = json::array();
    std::string csv = "parameter,value,icir,sharpe,error\n";
    for (const auto& r : rows) {
        json x;
        x["parameter"] = r.parameter;
        x["value"] = r.value;
        x["icir"] = num(r.icir);
        x["sharpe"] = num(r.sharpe);
        if (!r.error.empty())
            x["error"] = r.error;
        arr.push_back(x);
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        csv += fmt::format("{},{},{},{},{}\n", r.parameter, r.value, num(r.icir).dump(), num(r.sharpe).dump(), err);
    }
    j["rows"] = arr;
    Outputs out(cfg, "sweep", in.hashes);
    out.write("sweep.csv", csv);
    out.write_json("sweep.json", j);
    out.finish();
    std::cout << fmt::format("sweep: {} rows\n", rows.size());
    return 0;
}

json stats_json(const EventStats& s)
{
    json j;
    j["n"] = s.n;
    j["mean"] = num(s.mean);
    j["t_stat"] = num(s.t_stat);
    j["sharpe"] = num(s.sharpe);
    j["cumret"] = num(s.cumret);
    return j;
}

json bootstrap_json(const std::optional<BootstrapResult>& b)
{
    if (!b)
        return nullptr;
    json j;
    j["ci_low"] = num(b->ci_low);
    j["ci_high"] = num(b->ci_high);
    j["p_positive"] = num(b->p_positive);
    j["draws"] = b->draws;
    j["clusters"] = b->clusters;
    return j;
}

int cmd_events(const RunConfig& cfg)
{
    auto in = load_inputs(cfg, {true, true, true});
    const auto store = encode(in, cfg.dim);
    const auto report = run_events(cfg, in, *store);
    const auto& u = *in.universe;

    auto j = report_header("events", cfg, in);
    j["event_count"] = report.events.size();
    j["short_shortlists"] = report.short_shortlists;
    if (in.agent_labels)
        j["agent_labels"] = {{"records", in.agent_labels->size()}, {"unknown_tickers", in.agent_labels->unknown_tickers()}};
    json results = json::array();
    for (const auto& r : report.results) {
        json x;
        x["kind"] = std::string(to_string(r.kind));
        x["k"] = r.k;
        x["stats"] = stats_json(r.stats);
        if (r.null) {
            x["null_mean"] = num(r.null->mean);
            x["null_p95"] = num(r.null->p95);
            x["null_standard_error"] = num(r.null->standard_error);
            x["relaxed_draws"] = r.null->relaxed_draws;
        }
        results.push_back(x);
    }
    j["results"] = results;
    json summaries = json::array();
    for (const auto& s : report.summaries) {
        json x;
        x["k"] = s.k;
        x["percentile_vs_market"] = num(s.percentile_vs_market);
        x["percentile_vs_market_sector"] = num(s.percentile_vs_market_sector);
        x["graph_bootstrap"] = bootstrap_json(s.graph_bootstrap);
        x["agent_bootstrap"] = bootstrap_json(s.agent_bootstrap);
        summaries.push_back(x);
    }
    j["summaries"] = summaries;

    std::string csv = "event_id,source_id,date,trigger,kind,k,return\n";
    for (const auto& r : report.results)
        for (std::size_t e = 0; e < report.events.size(); ++e) {
            const auto& ev = report.events[e];
            csv += fmt::format("{},{},{},{},{},{},{}\n", ev.id, u.firm(ev.source).id, format_date(ev.date), ev.trigger,
                               to_string(r.kind), r.k, r.per_event[e]);
        }
    Outputs out(cfg, "events", in.hashes);
    out.write("events.csv", csv);
    out.write_json("events.json", j);
    out.finish();
    std::cout << fmt::format("events: {} events traced\n", report.events.size());
    return 0;
}

int cmd_audit(const RunConfig& cfg)
{
    auto in = load_inputs(cfg, factor_needs(cfg));
    const auto store = maybe_encode(cfg, in);
    const auto verdict = run_audit(cfg, in, store);
    auto j = report_header("audit", cfg, in);
    j["passed"] = verdict.passed;
    j["months_checked"] = verdict.months_checked;
    json bad = json::array();
    for (const auto& c : verdict.contaminated)
        bad.push_back({{"month", format_month(c.month)}, {"firm_id", in.universe->firm(c.firm).id}});
    j["contaminated"] = bad;
    Outputs out(cfg, "audit", in.hashes);
    out.write_json("audit.json", j);
    out.finish();
    std::cout << fmt::format("audit: {} over {} months\n", verdict.passed ? "pass" : "FAIL", verdict.months_checked);
    if (!verdict.passed) {
        std::cerr << json{{"error", {{"command", "audit"},
                                     {"type", "lookahead"},
                                     {"message", fmt::format("{} contaminated factor values",
                                                             verdict.contaminated.size())}}}}
                         .dump()
                  << "\n";
        return 3;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Cross-market peer-momentum factor engine"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    auto* synth = app.add_subcommand("synth", "generate a synthetic world");
    std::string synth_spec, synth_seed, synth_out, synth_manifest;
    synth->add_option("--config", synth_spec, "synthetic world spec (key = value)");
    synth->add_option("--seed", synth_seed, "seed override");
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--manifest", synth_manifest, "rerun from a synth manifest");

    std::map<std::string, Flags> flags;
    std::string truth;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"graph", "similarity graph and peer weights"},
        {"factor", "monthly peer-momentum factor"},
        {"backtest", "quintile long-short backtest"},
        {"geography", "ICIR for every ordered market pair"},
        {"events", "event-conditioned spillover study"},
        {"sweep", "dimension and lookback sweeps"},
        {"audit", "look-ahead perturbation audit"}};
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        add_common(sub, flags[name]);
        subs[name] = sub;
    }
    subs["graph"]->add_option("--truth", truth, "truth/links.csv for recovery scores");

    std::string active = "xmf";
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        if (synth->parsed()) {
            active = "synth";
            return cmd_synth(synth_spec, synth_seed, synth_out, synth_manifest);
        }
        for (const auto& [name, sub] : subs) {
            if (!sub->parsed())
                continue;
            active = name;
            const auto cfg = resolve(flags[name]);
            if (name == "graph")
                return cmd_graph(cfg, truth);
            if (name == "factor")
                return cmd_factor(cfg);
            if (name == "backtest")
                return cmd_backtest(cfg);
            if (name == "geography")
                return cmd_geography(cfg);
            if (name == "events")
                return cmd_events(cfg);
            if (name == "sweep")
                return cmd_sweep(cfg);
            if (name == "audit")
                return cmd_audit(cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"command", active}, {"type", "runtime"}, {"message", e.what()}}}}.dump() << "\n";
        return 1;
    }
    return 2;
}
