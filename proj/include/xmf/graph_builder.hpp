#pragma once

#include "xmf/common.hpp"
#include "xmf/panel_store.hpp"
#include "xmf/whitener.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace xmf {

/// Unit-normalised residual encodings of every universe firm, per category.
/// Firms absent from a category (or with a zero vector) are missing there.
class EncodingStore {
public:
    EncodingStore(const Universe& universe, const std::vector<ResidualEncoding>& encodings);

    std::size_t category_count() const { return units_.size(); }
    const std::string& category(std::size_t c) const { return names_.at(c); }
    bool has(FirmIndex f, std::size_t c) const { return present_[c][f] != 0; }
    bool encoded(FirmIndex f) const;
    auto unit(FirmIndex f, std::size_t c) const { return units_[c].row(static_cast<Eigen::Index>(f)); }
    /// Rows in the encoding files whose firm id is not in the universe.
    std::size_t unknown_ids() const { return unknown_ids_; }

private:
    std::vector<std::string> names_;
    std::vector<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> units_;
    std::vector<std::vector<unsigned char>> present_;
    std::size_t unknown_ids_ = 0;
};

struct PairScore {
    double score = kMissing;  // NaN when no category is shared
    int categories_used = 0;
    bool low_confidence() const { return categories_used > 0 && categories_used < 3; }
};

/// Mean cosine over the categories both firms have. Zero-norm vectors skip
/// their category.
PairScore pair_score(std::span<const std::optional<Eigen::VectorXd>> zi,
                     std::span<const std::optional<Eigen::VectorXd>> zj);
PairScore pair_score(const EncodingStore& store, FirmIndex i, FirmIndex j);

/// Dense target x source score block for one ordered market pair.
struct SimilarityGraph {
    Market source = Market::US;
    Market target = Market::JP;
    std::vector<FirmIndex> targets;
    std::vector<FirmIndex> sources;
    std::vector<double> scores;                 // targets.size() * sources.size(), row = target
    std::vector<unsigned char> categories_used;  // same layout

    double score(std::size_t t, std::size_t s) const { return scores[t * sources.size() + s]; }
    std::size_t pair_count() const { return scores.size(); }
};

/// Scores every (target, source) pair. Self pairs (domestic graphs) are missing.
SimilarityGraph build_graph(const EncodingStore& store, const Universe& universe, Market source, Market target,
                            unsigned threads = 1);

struct SigmoidParams {
    double kappa = 50.0;
    double tau = 0.99;
};

double sigmoid_weight(double rank, SigmoidParams params = {});

/// Percentile ranks in (0, 1]: (ascending position) / N with tied scores
/// sharing the mean position of their group. NaN inputs stay NaN and are not
/// counted in N.
std::vector<double> percentile_ranks(std::span<const double> scores);

enum class PeerScheme { text_sigmoid, gics_equal, corr_sigmoid };
std::string_view to_string(PeerScheme s);
PeerScheme parse_peer_scheme(std::string_view text);

struct TargetCoverage {
    bool uncovered = false;    // no peer with nonzero weight
    bool single_peer = false;  // exactly one scored peer; its rank is 1
    int low_confidence_pairs = 0;
};

struct PeerWeights {
    PeerScheme scheme = PeerScheme::text_sigmoid;
    Market source = Market::US;
    Market target = Market::JP;
    std::vector<FirmIndex> targets;
    std::vector<FirmIndex> sources;
    std::vector<double> alpha;  // targets.size() * sources.size(), 0 = not a peer
    std::vector<TargetCoverage> coverage;

    double weight(std::size_t t, std::size_t s) const { return alpha[t * sources.size() + s]; }
};

PeerWeights sigmoid_weights(const SimilarityGraph& graph, SigmoidParams params = {});

/// alpha = 1 for same-sector source firms, 0 otherwise.
PeerWeights gics_equal_weights(const Universe& universe, Market source, Market target);

struct CorrelationParams {
    std::size_t window = 252;
    std::size_t min_overlap = 120;
};

/// Pearson correlation of daily close-to-close returns over the last `window`
/// target-market trading dates up to `as_of`, percentile-ranked per target and
/// passed through the sigmoid. Pairs with fewer than `min_overlap` common
/// return dates get no weight.
PeerWeights corr_weights(const PricePanel& prices, Market source, Market target, Date as_of,
                         CorrelationParams corr = {}, SigmoidParams params = {}, unsigned threads = 1);

/// Raw correlation block used by corr_weights (NaN for excluded pairs).
SimilarityGraph correlation_graph(const PricePanel& prices, Market source, Market target, Date as_of,
                                  CorrelationParams corr = {}, unsigned threads = 1);

struct Neighbor {
    FirmIndex firm = 0;
    double score = 0.0;
};

struct NeighborList {
    std::vector<Neighbor> neighbors;  // best first; ties broken by firm id
    bool fewer_than_k = false;
};

NeighborList top_k_neighbors(const EncodingStore& store, const Universe& universe, FirmIndex source, std::size_t k,
                             const std::set<Market>& excluded_markets);

/// target_id,source_id,score,alpha rows for every scored pair.
void write_graph_csv(const SimilarityGraph& graph, const PeerWeights& weights, const Universe& universe,
                     const std::filesystem::path& path);

/// Compact little-endian binary form of a graph and its weights.
void write_graph_binary(const SimilarityGraph& graph, const PeerWeights& weights, const Universe& universe,
                        const std::filesystem::path& path);
struct LoadedGraph {
    SimilarityGraph graph;
    PeerWeights weights;
};
LoadedGraph read_graph_binary(const Universe& universe, const std::filesystem::path& path);

}  // namespace xmf
