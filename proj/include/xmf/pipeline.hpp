#pragma once

#include "xmf/backtester.hpp"
#include "xmf/config.hpp"
#include "xmf/event_lab.hpp"
#include "xmf/factor_engine.hpp"
#include "xmf/graph_builder.hpp"
#include "xmf/panel_store.hpp"
#include "xmf/whitener.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace xmf {

/// Loaded inputs of one run plus their content hashes.
struct Inputs {
    std::shared_ptr<const Universe> universe;
    std::shared_ptr<const PricePanel> prices;
    std::vector<EmbeddingSet> embeddings;
    std::optional<AgentLabels> agent_labels;
    std::map<std::string, std::string> hashes;  // role -> sha256
};

struct InputNeeds {
    bool prices = true;
    bool embeddings = false;
    bool agent_labels = false;
};

/// Loads what `needs` asks for, failing on the first missing artifact.
Inputs load_inputs(const RunConfig& config, InputNeeds needs);

/// Whitens each category on all of its firms at output dimension `dim`.
std::vector<ResidualEncoding> whiten_sets(const std::vector<EmbeddingSet>& sets, int dim,
                                          std::vector<WhitenModel>* models = nullptr);

std::shared_ptr<const EncodingStore> encode(const Inputs& inputs, int dim);

/// Relabels source columns with a seeded permutation.
PeerWeights shuffle_sources(const PeerWeights& weights, std::uint64_t seed);

/// Month-invariant weights for the text and sector schemes.
PeerWeights static_weights(const RunConfig& config, const Inputs& inputs, const EncodingStore* store, Market source,
                           Market target, SimilarityGraph* graph_out = nullptr);

/// Builds one month's factor from any panel. The correlation scheme
/// re-estimates its weights from the panel with data through month M-1.
FactorBuilder factor_builder(const RunConfig& config, const Inputs& inputs,
                             std::shared_ptr<const EncodingStore> store, Market source, Market target, int lookback,
                             FactorVariant variant);

/// Factor months: from the first month with a full lookback to the last
/// month of the panel, clipped to the configured start/end.
std::vector<Month> factor_months(const RunConfig& config, const PricePanel& prices, int lookback);

std::vector<FactorPanel> factor_series(const FactorBuilder& builder, const PricePanel& prices,
                                       const std::vector<Month>& months, unsigned threads);

/// CSV form of a factor series: month,firm_id,value.
std::string factors_to_csv(const std::vector<FactorPanel>& factors, const Universe& universe);
std::vector<FactorPanel> factors_from_csv(const std::filesystem::path& path, const Universe& universe,
                                          const FactorPanel& header);

struct PairRun {
    std::vector<FactorPanel> factors;
    BacktestReport backtest;
};

PairRun run_pair(const RunConfig& config, const Inputs& inputs, std::shared_ptr<const EncodingStore> store,
                 Market source, Market target, int lookback);

GeographyMatrix run_geography(const RunConfig& config, const Inputs& inputs,
                              std::shared_ptr<const EncodingStore> store);

struct SweepRow {
    std::string parameter;  // "dim" or "lookback"
    int value = 0;
    std::optional<double> icir;
    std::optional<double> sharpe;
    std::string error;
};

std::vector<SweepRow> run_sweep(const RunConfig& config, const Inputs& inputs);

EventConfig event_config(const RunConfig& config, const PricePanel& prices);
EventReport run_events(const RunConfig& config, const Inputs& inputs, const EncodingStore& store);

AuditVerdict run_audit(const RunConfig& config, const Inputs& inputs, std::shared_ptr<const EncodingStore> store);

}  // namespace xmf
