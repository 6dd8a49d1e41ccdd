#pragma once

#include "xmf/common.hpp"
#include "xmf/graph_builder.hpp"
#include "xmf/panel_store.hpp"
#include "xmf/whitener.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace xmf {

struct MarketSpec {
    Market market = Market::US;
    std::size_t firms = 0;
    double holiday_rate = 0.0;  // chance that a candidate weekday is closed
};

/// Parameters of a synthetic world. Return volatilities are daily log-return
/// standard deviations; `sigma` is the monthly noise sd of linked targets.
struct SynthSpec {
    std::vector<MarketSpec> markets;
    Month start = Month::from_ym(2010, 1);
    int months = 120;
    int days_per_month = 21;
    int sectors_per_market = 10;

    double market_sd = 0.004;
    double sector_sd = 0.004;
    double idio_sd = 0.015;

    // Monthly lead-lag plant: every firm of `lead_target` follows one distinct
    // firm of `lead_source` with strength beta, `lag_months` later.
    std::optional<Market> lead_source;
    std::optional<Market> lead_target;
    double beta = 0.5;
    int lag_months = 1;
    std::optional<double> sigma;
    /// Permits lag_months = 0 for the contemporaneous control experiment.
    bool allow_contemporaneous = false;

    // Event plant: jumps on source firms echoed by their neighbours' open(t+2)
    // to open(t+3) return.
    std::optional<Market> event_market;
    std::size_t event_sources = 0;
    std::size_t event_neighbors = 10;
    std::size_t jumps_per_source = 24;
    double jump_size = 0.06;
    double echo = 0.005;

    // Embeddings: a shared style subspace, a firm latent (copied across linked
    // firms) and per-vector noise.
    std::size_t embed_dim = 64;
    std::size_t categories = 10;
    std::size_t style_rank = 4;
    double style_sd = 3.0;
    double latent_sd = 1.0;
    double partner_noise = 0.3;
    double embed_noise = 0.5;

    std::uint64_t seed = 1;

    /// Throws Error describing the first invalid field.
    void validate() const;
};

struct PlantedLink {
    FirmIndex target = 0;
    FirmIndex source = 0;
    double beta = 0.0;
    int lag_months = 0;
};

struct EventLink {
    FirmIndex source = 0;
    FirmIndex neighbor = 0;
};

struct PlantedEvent {
    FirmIndex source = 0;
    Date date;
    double jump = 0.0;
    /// Echo left in the neighbour basket's market-relative return after the
    /// market mean absorbs every echo planted on the same day.
    double expected_basket_return = 0.0;
};

struct SynthWorld {
    SynthSpec spec;
    std::vector<Firm> firms;
    std::vector<TradingCalendar> calendars;
    std::vector<PriceRow> prices;
    std::vector<EmbeddingSet> embeddings;
    std::vector<PlantedLink> links;
    std::vector<EventLink> event_links;
    std::vector<PlantedEvent> events;

    std::shared_ptr<const Universe> universe() const;
    PricePanel panel() const;
};

SynthWorld generate(const SynthSpec& spec);

/// Monthly sigma giving planted pairs the requested lagged correlation,
/// from the spec's daily volatilities.
double sigma_for_correlation(const SynthSpec& spec, double correlation);

/// Mean over planted links of corr(r_target(m), r_source(m - lag)) using
/// monthly returns from `prices`.
double planted_pair_correlation(const PricePanel& prices, const std::vector<PlantedLink>& links);

/// Writes firms.csv, prices.csv, calendar.csv, embeddings/<category>.csv and
/// truth/{links,event_links,planted_events}.csv under `dir`.
void write_world(const SynthWorld& world, const std::filesystem::path& dir);

struct TruthLink {
    std::string target_id;
    std::string source_id;
};
std::vector<TruthLink> load_truth_links(const std::filesystem::path& links_csv);

/// Fraction of planted links whose source appears among the target's top-k
/// sources in `graph` (score descending, ties by firm index). Links outside
/// the graph's market pair are ignored; nullopt when none remain.
std::optional<double> recovery_score(const SimilarityGraph& graph, const Universe& universe,
                                     const std::vector<TruthLink>& links, std::size_t k);

}  // namespace xmf
