#pragma once

#include "xmf/common.hpp"
#include "xmf/graph_builder.hpp"
#include "xmf/panel_store.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace xmf {

// ---------------------------------------------------------------------------
// Seeded randomness. Engine output and the bounded-integer mapping are both
// fully specified, so draws are reproducible across platforms.

std::uint64_t splitmix64(std::uint64_t x);
/// Mixes a master seed with stream identifiers into one engine seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);
/// Uniform integer in [0, n) by rejection sampling.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n);

// ---------------------------------------------------------------------------

struct EventRecord {
    std::size_t id = 0;
    FirmIndex source = 0;
    Date date;              // source-market trading date
    double trigger = 0.0;   // market-relative close-to-close return
};

/// Every (source, D) in [start, end] whose market-relative close-to-close
/// return exceeds `threshold`. Days lacking D or D-1 prices are skipped.
std::vector<EventRecord> detect_events(const PricePanel& prices, std::span<const FirmIndex> sources, double threshold,
                                       Date start, Date end);

struct AgentLabel {
    FirmIndex candidate = 0;
    std::string relation;
    int sign = 0;
    double confidence = 0.0;
    std::string rationale;
};

/// Agent output per source firm, in the event-tracing output contract:
/// a JSON object mapping each source firm id to a list of
/// {"ticker","relation","sign","confidence","rationale"} records.
class AgentLabels {
public:
    static AgentLabels load(const std::filesystem::path& path, const Universe& universe);
    static AgentLabels parse(std::string_view json_text, const Universe& universe);

    const AgentLabel* find(FirmIndex source, FirmIndex candidate) const;
    /// Records naming firms outside the universe.
    std::size_t unknown_tickers() const { return unknown_; }
    std::size_t size() const;

private:
    std::map<FirmIndex, std::map<FirmIndex, AgentLabel>> labels_;
    std::size_t unknown_ = 0;
};

enum class BasketKind { graph_topk, graph_plus_agent, market_random, market_sector_random };
std::string_view to_string(BasketKind k);

struct Basket {
    BasketKind kind = BasketKind::graph_topk;
    std::size_t k = 0;
    std::vector<FirmIndex> members;
    bool relaxed = false;  // a sector cell fell back to its market
};

/// Graph neighbours of one source, best first; shared by all its events.
struct Shortlist {
    FirmIndex source = 0;
    std::vector<FirmIndex> ranked;
    bool fewer_than_requested = false;
};

Shortlist make_shortlist(const EncodingStore& store, const Universe& universe, FirmIndex source, std::size_t size,
                         const std::set<Market>& excluded_markets);

/// First K shortlist members.
Basket graph_basket(const Shortlist& shortlist, std::size_t k);
/// Shortlist members labelled sign=+1 (confidence >= min_confidence), in
/// similarity order, up to K. Never padded and never adds firms.
Basket agent_basket(const Shortlist& shortlist, std::size_t k, const AgentLabels& labels, double min_confidence = 0.0);

enum class NullMode { market, market_sector };

/// Candidate pools for composition-matched random baskets: listed firms per
/// market and per (market, sector).
class NullPools {
public:
    explicit NullPools(const Universe& universe);
    /// One basket matching the graph basket's per-market (or per market and
    /// sector) counts, drawn without replacement and excluding `source`.
    Basket draw(const Basket& graph, FirmIndex source, NullMode mode, std::mt19937_64& rng) const;

private:
    const Universe& universe_;
    std::array<std::vector<FirmIndex>, 5> by_market_;
    std::map<std::pair<Market, std::string>, std::vector<FirmIndex>> by_cell_;
};

/// `draws` baskets; draw d is seeded from (master seed, event id, d, mode),
/// so results do not depend on evaluation order.
std::vector<Basket> random_null_baskets(const NullPools& pools, const EventRecord& event, const Basket& graph,
                                        NullMode mode, std::size_t draws, std::uint64_t master_seed);

/// Equal-weight mean of members' market-relative open(D+2)->open(D+3)
/// returns, each counted in the member's own calendar. Members without the
/// prints are dropped; nullopt if none remain.
std::optional<double> event_return(const PricePanel& prices, const Basket& basket, Date event_date);

struct EventStats {
    std::size_t n = 0;
    double mean = kMissing;
    std::optional<double> t_stat;
    std::optional<double> sharpe;  // mean/sd * sqrt(n / window_years)
    double cumret = kMissing;      // compounded
};

EventStats aggregate(std::span<const double> returns, double window_years);

struct NullSummary {
    std::vector<double> seed_means;  // one per draw index
    double mean = kMissing;
    double p95 = kMissing;
    double standard_error = kMissing;  // from per-event draw averages
    std::size_t relaxed_draws = 0;
};

/// Percentage of null seed means at or below `value`.
double percentile_vs_null(double value, std::span<const double> seed_means);

struct BootstrapResult {
    double ci_low = kMissing;
    double ci_high = kMissing;
    double p_positive = kMissing;
    std::size_t draws = 0;
    std::size_t clusters = 0;
};

/// Resamples source firms with replacement; a draw's statistic is the mean
/// over all events of the sampled firms. Refuses fewer than two clusters.
BootstrapResult cluster_bootstrap(const std::map<FirmIndex, std::vector<double>>& returns_by_source,
                                  std::size_t draws, std::uint64_t seed);

struct EventConfig {
    double threshold = 0.03;
    std::vector<std::size_t> ks{10, 20, 30, 60};
    std::size_t null_draws = 200;
    std::size_t bootstrap_draws = 2000;
    std::uint64_t seed = 20240930;
    /// Markets excluded from every shortlist; nullopt = each source's home market.
    std::optional<std::set<Market>> excluded_markets;
    double window_years = 1.51;
    double min_confidence = 0.0;
    Date start{};
    Date end{};
    unsigned threads = 1;
};

struct KindResult {
    BasketKind kind = BasketKind::graph_topk;
    std::size_t k = 0;
    std::vector<double> per_event;  // aligned with EventReport::events, NaN = excluded
    EventStats stats;
    std::optional<NullSummary> null;  // random kinds only
};

struct KSummary {
    std::size_t k = 0;
    std::optional<double> percentile_vs_market;
    std::optional<double> percentile_vs_market_sector;
    std::optional<BootstrapResult> graph_bootstrap;
    std::optional<BootstrapResult> agent_bootstrap;
};

struct EventReport {
    std::vector<EventRecord> events;
    std::vector<KindResult> results;
    std::vector<KSummary> summaries;
    std::size_t short_shortlists = 0;
};

EventReport run_event_study(const PricePanel& prices, const EncodingStore& store, std::span<const FirmIndex> sources,
                            const AgentLabels* labels, const EventConfig& config);

}  // namespace xmf
