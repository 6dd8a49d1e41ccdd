#include "xmf/event_lab.hpp"

#include "xmf/factor_engine.hpp"
#include "xmf/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/core.h>

namespace xmf {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b, std::uint64_t c)
{
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return splitmix64(h ^ c);
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n)
{
    if (n == 0)
        throw Error("uniform_below: empty range");
    const std::uint64_t threshold = (0 - n) % n;
    while (true) {
        const std::uint64_t x = rng();
        if (x >= threshold)
            return x % n;
    }
}

// ---------------------------------------------------------------------------

std::vector<EventRecord> detect_events(const PricePanel& prices, std::span<const FirmIndex> sources, double threshold,
                                       Date start, Date end)
{
    std::vector<EventRecord> events;
    for (FirmIndex f : sources) {
        const auto& cal = prices.calendar(prices.universe().firm(f).market);
        const auto lo = std::lower_bound(cal.dates.begin(), cal.dates.end(), start) - cal.dates.begin();
        for (auto pos = static_cast<std::size_t>(lo); pos < cal.dates.size() && cal.dates[pos] <= end; ++pos) {
            const auto r = prices.market_relative_daily_return(f, cal.dates[pos], DailyReturnKind::close_to_close);
            if (r && *r > threshold)
                events.push_back(EventRecord{0, f, cal.dates[pos], *r});
        }
    }
    std::stable_sort(events.begin(), events.end(), [](const EventRecord& a, const EventRecord& b) {
        if (a.date != b.date)
            return a.date < b.date;
        return a.source < b.source;
    });
    for (std::size_t k = 0; k < events.size(); ++k)
        events[k].id = k;
    return events;
}

// ---------------------------------------------------------------------------

AgentLabels AgentLabels::parse(std::string_view json_text, const Universe& universe)
{
    AgentLabels out;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(fmt::format("agent label file is not valid JSON: {}", e.what()));
    }
    if (!doc.is_object())
        throw Error("agent label file must map source firm ids to label lists");
    for (const auto& [source_id, list] : doc.items()) {
        const FirmIndex source = universe.require(source_id);
        if (!list.is_array())
            throw Error(fmt::format("agent labels for '{}' must be a list", source_id));
        auto& per_source = out.labels_[source];
        for (const auto& rec : list) {
            const auto ticker = rec.at("ticker").get<std::string>();
            auto candidate = universe.find(ticker);
            if (!candidate) {
                ++out.unknown_;
                continue;
            }
            AgentLabel label;
            label.candidate = *candidate;
            label.relation = rec.value("relation", std::string{});
            label.sign = rec.at("sign").get<int>();
            label.confidence = rec.at("confidence").get<double>();
            label.rationale = rec.value("rationale", std::string{});
            if (label.sign < -1 || label.sign > 1)
                throw Error(fmt::format("agent label {}->{}: sign {} outside {{-1,0,1}}", source_id, ticker, label.sign));
            if (!(label.confidence >= 0.0 && label.confidence <= 1.0))
                throw Error(fmt::format("agent label {}->{}: confidence {} outside [0,1]", source_id, ticker,
                                        label.confidence));
            per_source[label.candidate] = std::move(label);
        }
    }
    return out;
}

AgentLabels AgentLabels::load(const std::filesystem::path& path, const Universe& universe)
{
    std::ifstream in(path);
    if (!in)
        throw Error(fmt::format("cannot open agent label file '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), universe);
}

const AgentLabel* AgentLabels::find(FirmIndex source, FirmIndex candidate) const
{
    auto s = labels_.find(source);
    if (s == labels_.end())
        return nullptr;
    auto c = s->second.find(candidate);
    return c == s->second.end() ? nullptr : &c->second;
}

std::size_t AgentLabels::size() const
{
    std::size_t n = 0;
    for (const auto& [s, m] : labels_)
        n += m.size();
    return n;
}

// ---------------------------------------------------------------------------

std::string_view to_string(BasketKind k)
{
    switch (k) {
    case BasketKind::graph_topk: return "graph_topk";
    case BasketKind::graph_plus_agent: return "graph_plus_agent";
    case BasketKind::market_random: return "market_random";
    case BasketKind::market_sector_random: return "market_sector_random";
    }
    return "?";
}

Shortlist make_shortlist(const EncodingStore& store, const Universe& universe, FirmIndex source, std::size_t size,
                         const std::set<Market>& excluded_markets)
{
    const auto nl = top_k_neighbors(store, universe, source, size, excluded_markets);
    Shortlist s;
    s.source = source;
    s.fewer_than_requested = nl.fewer_than_k;
    for (const auto& n : nl.neighbors)
        s.ranked.push_back(n.firm);
    return s;
}

Basket graph_basket(const Shortlist& shortlist, std::size_t k)
{
    Basket b;
    b.kind = BasketKind::graph_topk;
    b.k = k;
    const std::size_t n = std::min(k, shortlist.ranked.size());
    b.members.assign(shortlist.ranked.begin(), shortlist.ranked.begin() + static_cast<std::ptrdiff_t>(n));
    return b;
}

Basket agent_basket(const Shortlist& shortlist, std::size_t k, const AgentLabels& labels, double min_confidence)
{
    Basket b;
    b.kind = BasketKind::graph_plus_agent;
    b.k = k;
    for (FirmIndex f : shortlist.ranked) {
        if (b.members.size() == k)
            break;
        const auto* label = labels.find(shortlist.source, f);
        if (label && label->sign == 1 && label->confidence >= min_confidence)
            b.members.push_back(f);
    }
    for (FirmIndex f : b.members)
        if (std::find(shortlist.ranked.begin(), shortlist.ranked.end(), f) == shortlist.ranked.end())
            throw Error("agent basket member outside the graph shortlist");
    return b;
}

NullPools::NullPools(const Universe& universe) : universe_(universe)
{
    for (FirmIndex f = 0; f < universe.size(); ++f) {
        const auto& firm = universe.firm(f);
        if (!firm.listed)
            continue;
        by_market_[static_cast<std::size_t>(firm.market)].push_back(f);
        by_cell_[{firm.market, firm.sector}].push_back(f);
    }
}

namespace {

/// Appends `count` firms from `pool` not equal to `source` and not already in
/// `taken`. Returns false when the pool cannot supply them.
bool sample_from(const std::vector<FirmIndex>& pool, FirmIndex source, std::size_t count, std::vector<FirmIndex>& taken,
                 std::mt19937_64& rng)
{
    std::vector<FirmIndex> avail;
    avail.reserve(pool.size());
    for (FirmIndex f : pool)
        if (f != source && std::find(taken.begin(), taken.end(), f) == taken.end())
            avail.push_back(f);
    if (avail.size() < count)
        return false;
    for (std::size_t k = 0; k < count; ++k) {
        const auto j = k + static_cast<std::size_t>(uniform_below(rng, avail.size() - k));
        std::swap(avail[k], avail[j]);
        taken.push_back(avail[k]);
    }
    return true;
}

}  // namespace

Basket NullPools::draw(const Basket& graph, FirmIndex source, NullMode mode, std::mt19937_64& rng) const
{
    Basket b;
    b.kind = mode == NullMode::market ? BasketKind::market_random : BasketKind::market_sector_random;
    b.k = graph.k;
    // Count requirements per cell in a fixed (ordered) iteration order.
    std::map<std::pair<Market, std::string>, std::size_t> need;
    for (FirmIndex f : graph.members) {
        const auto& firm = universe_.firm(f);
        ++need[{firm.market, mode == NullMode::market ? std::string{} : firm.sector}];
    }
    std::map<Market, std::size_t> fallback;
    for (const auto& [cell, count] : need) {
        const auto& market_pool = by_market_[static_cast<std::size_t>(cell.first)];
        if (mode == NullMode::market) {
            if (!sample_from(market_pool, source, count, b.members, rng))
                throw Error(fmt::format("market {} has too few listed firms for a random basket of {}",
                                        to_string(cell.first), count));
            continue;
        }
        auto it = by_cell_.find(cell);
        if (it == by_cell_.end() || !sample_from(it->second, source, count, b.members, rng)) {
            fallback[cell.first] += count;
            b.relaxed = true;
        }
    }
    for (const auto& [market, count] : fallback)
        if (!sample_from(by_market_[static_cast<std::size_t>(market)], source, count, b.members, rng))
            throw Error(fmt::format("market {} has too few listed firms for a random basket", to_string(market)));
    return b;
}

std::vector<Basket> random_null_baskets(const NullPools& pools, const EventRecord& event, const Basket& graph,
                                        NullMode mode, std::size_t draws, std::uint64_t master_seed)
{
    std::vector<Basket> out;
    out.reserve(draws);
    for (std::size_t d = 0; d < draws; ++d) {
        std::mt19937_64 rng(derive_seed(master_seed, event.id, d, static_cast<std::uint64_t>(mode) * 1000003ULL + graph.k));
        out.push_back(pools.draw(graph, event.source, mode, rng));
    }
    return out;
}

std::optional<double> event_return(const PricePanel& prices, const Basket& basket, Date event_date)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (FirmIndex f : basket.members) {
        if (auto r = prices.market_relative_daily_return(f, event_date, DailyReturnKind::open_open_t2)) {
            sum += *r;
            ++n;
        }
    }
    if (n == 0)
        return std::nullopt;
    return sum / static_cast<double>(n);
}

EventStats aggregate(std::span<const double> returns, double window_years)
{
    std::vector<double> r;
    for (double x : returns)
        if (!std::isnan(x))
            r.push_back(x);
    EventStats s;
    s.n = r.size();
    if (r.empty())
        return s;
    s.mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
    double growth = 1.0;
    for (double x : r)
        growth *= 1.0 + x;
    s.cumret = growth - 1.0;
    if (r.size() < 2)
        return s;
    double ss = 0.0;
    for (double x : r)
        ss += (x - s.mean) * (x - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(r.size() - 1));
    if (sd > 0.0) {
        const double n = static_cast<double>(r.size());
        s.t_stat = s.mean / (sd / std::sqrt(n));
        if (window_years > 0.0)
            s.sharpe = s.mean / sd * std::sqrt(n / window_years);
    }
    return s;
}

double percentile_vs_null(double value, std::span<const double> seed_means)
{
    if (seed_means.empty())
        return kMissing;
    const auto at_or_below = std::count_if(seed_means.begin(), seed_means.end(), [&](double x) { return x <= value; });
    return 100.0 * static_cast<double>(at_or_below) / static_cast<double>(seed_means.size());
}

BootstrapResult cluster_bootstrap(const std::map<FirmIndex, std::vector<double>>& returns_by_source, std::size_t draws,
                                  std::uint64_t seed)
{
    struct Cluster {
        double sum = 0.0;
        std::size_t n = 0;
    };
    std::vector<Cluster> clusters;
    for (const auto& [firm, rets] : returns_by_source) {
        Cluster c;
        for (double r : rets)
            if (!std::isnan(r)) {
                c.sum += r;
                ++c.n;
            }
        if (c.n > 0)
            clusters.push_back(c);
    }
    if (clusters.size() < 2)
        throw Error(fmt::format("cluster bootstrap needs at least 2 source firms with events, got {}", clusters.size()));
    if (draws == 0)
        throw Error("cluster bootstrap needs at least one draw");

    BootstrapResult out;
    out.draws = draws;
    out.clusters = clusters.size();
    std::vector<double> stats(draws);
    std::size_t positive = 0;
    for (std::size_t d = 0; d < draws; ++d) {
        std::mt19937_64 rng(derive_seed(seed, 0xB007, d));
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t k = 0; k < clusters.size(); ++k) {
            const auto& c = clusters[static_cast<std::size_t>(uniform_below(rng, clusters.size()))];
            sum += c.sum;
            n += c.n;
        }
        stats[d] = sum / static_cast<double>(n);
        if (stats[d] > 0.0)
            ++positive;
    }
    out.ci_low = quantile(stats, 0.025);
    out.ci_high = quantile(stats, 0.975);
    out.p_positive = static_cast<double>(positive) / static_cast<double>(draws);
    return out;
}

// ---------------------------------------------------------------------------

EventReport run_event_study(const PricePanel& prices, const EncodingStore& store, std::span<const FirmIndex> sources,
                            const AgentLabels* labels, const EventConfig& config)
{
    if (config.ks.empty())
        throw Error("event study needs at least one basket size K");
    const auto& universe = prices.universe();
    EventReport report;
    report.events = detect_events(prices, sources, config.threshold, config.start, config.end);
    const auto& events = report.events;
    const std::size_t max_k = *std::max_element(config.ks.begin(), config.ks.end());

    std::map<FirmIndex, Shortlist> shortlists;
    for (const auto& e : events) {
        if (shortlists.count(e.source))
            continue;
        std::set<Market> excluded = config.excluded_markets.value_or(std::set<Market>{universe.firm(e.source).market});
        auto s = make_shortlist(store, universe, e.source, max_k, excluded);
        if (s.fewer_than_requested)
            ++report.short_shortlists;
        shortlists.emplace(e.source, std::move(s));
    }

    const NullPools pools(universe);
    const std::size_t draws = config.null_draws;

    for (std::size_t k : config.ks) {
        const std::size_t ne = events.size();
        std::vector<double> graph_r(ne, kMissing), agent_r(ne, kMissing);
        // null_r[mode][event * draws + d]
        std::array<std::vector<double>, 2> null_r{std::vector<double>(ne * draws, kMissing),
                                                  std::vector<double>(ne * draws, kMissing)};
        std::array<std::vector<unsigned char>, 2> relaxed{std::vector<unsigned char>(ne * draws, 0),
                                                          std::vector<unsigned char>(ne * draws, 0)};
        parallel_for(ne, config.threads, [&](std::size_t e) {
            const auto& ev = events[e];
            const auto& shortlist = shortlists.at(ev.source);
            const auto gb = graph_basket(shortlist, k);
            if (auto r = event_return(prices, gb, ev.date))
                graph_r[e] = *r;
            if (labels) {
                const auto ab = agent_basket(shortlist, k, *labels, config.min_confidence);
                if (auto r = event_return(prices, ab, ev.date))
                    agent_r[e] = *r;
            }
            if (gb.members.empty())
                return;
            for (int mode = 0; mode < 2; ++mode) {
                const auto baskets =
                    random_null_baskets(pools, ev, gb, mode == 0 ? NullMode::market : NullMode::market_sector, draws,
                                        config.seed);
                for (std::size_t d = 0; d < draws; ++d) {
                    relaxed[mode][e * draws + d] = baskets[d].relaxed ? 1 : 0;
                    if (auto r = event_return(prices, baskets[d], ev.date))
                        null_r[mode][e * draws + d] = *r;
                }
            }
        });

        KindResult graph{BasketKind::graph_topk, k, graph_r, aggregate(graph_r, config.window_years), std::nullopt};
        report.results.push_back(graph);
        KSummary summary;
        summary.k = k;
        if (labels) {
            KindResult agent{BasketKind::graph_plus_agent, k, agent_r, aggregate(agent_r, config.window_years),
                             std::nullopt};
            report.results.push_back(agent);
        }

        for (int mode = 0; mode < 2; ++mode) {
            NullSummary ns;
            ns.seed_means.assign(draws, kMissing);
            for (std::size_t d = 0; d < draws; ++d) {
                double sum = 0.0;
                std::size_t n = 0;
                for (std::size_t e = 0; e < ne; ++e) {
                    const double r = null_r[mode][e * draws + d];
                    if (!std::isnan(r)) {
                        sum += r;
                        ++n;
                    }
                    ns.relaxed_draws += relaxed[mode][e * draws + d];
                }
                if (n > 0)
                    ns.seed_means[d] = sum / static_cast<double>(n);
            }
            // Per-event average over draws: the bar reported for the random kind.
            std::vector<double> per_event(ne, kMissing);
            for (std::size_t e = 0; e < ne; ++e) {
                double sum = 0.0;
                std::size_t n = 0;
                for (std::size_t d = 0; d < draws; ++d) {
                    const double r = null_r[mode][e * draws + d];
                    if (!std::isnan(r)) {
                        sum += r;
                        ++n;
                    }
                }
                if (n > 0)
                    per_event[e] = sum / static_cast<double>(n);
            }
            std::vector<double> valid_means;
            for (double m : ns.seed_means)
                if (!std::isnan(m))
                    valid_means.push_back(m);
            if (!valid_means.empty()) {
                ns.mean = std::accumulate(valid_means.begin(), valid_means.end(), 0.0) /
                          static_cast<double>(valid_means.size());
                ns.p95 = quantile(valid_means, 0.95);
            }
            const auto pe_stats = aggregate(per_event, config.window_years);
            if (pe_stats.t_stat && *pe_stats.t_stat != 0.0)
                ns.standard_error = pe_stats.mean / *pe_stats.t_stat;
            const double pct = std::isnan(graph.stats.mean) ? kMissing : percentile_vs_null(graph.stats.mean, valid_means);
            if (mode == 0)
                summary.percentile_vs_market = to_optional(pct);
            else
                summary.percentile_vs_market_sector = to_optional(pct);
            KindResult kr{mode == 0 ? BasketKind::market_random : BasketKind::market_sector_random, k, per_event,
                          pe_stats, std::move(ns)};
            report.results.push_back(std::move(kr));
        }

        auto bootstrap = [&](const std::vector<double>& per_event) -> std::optional<BootstrapResult> {
            std::map<FirmIndex, std::vector<double>> by_source;
            for (std::size_t e = 0; e < ne; ++e)
                if (!std::isnan(per_event[e]))
                    by_source[events[e].source].push_back(per_event[e]);
            if (by_source.size() < 2)
                return std::nullopt;
            return cluster_bootstrap(by_source, config.bootstrap_draws, derive_seed(config.seed, 0xC1u, k));
        };
        summary.graph_bootstrap = bootstrap(graph_r);
        if (labels)
            summary.agent_bootstrap = bootstrap(agent_r);
        report.summaries.push_back(summary);
    }
    return report;
}

}  // namespace xmf
