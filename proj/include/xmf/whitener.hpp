#pragma once

#include "xmf/common.hpp"

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace xmf {

/// The ten disclosure categories; an embedding directory holds one
/// `<category>.csv` per entry that is present.
inline constexpr std::array<std::string_view, 10> kSchemaCategories{
    "main_business_segments", "core_technologies",  "primary_customers", "supply_chain_position",
    "geographic_coverage",    "financial_profile",  "revenue_model",     "value_proposition",
    "strategic_focus",        "key_competitors"};

/// Raw embedding vectors of one category, one row per firm.
struct EmbeddingSet {
    std::string category;
    std::vector<std::string> firm_ids;
    Eigen::MatrixXd vectors;  // n x p

    std::size_t size() const { return firm_ids.size(); }
    Eigen::Index dim() const { return vectors.cols(); }
};

/// Reads `firm_id,v1,...,vp` rows. Rejects ragged rows and non-finite values.
EmbeddingSet load_embeddings(const std::filesystem::path& path, std::string category);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

/// Loads every `<category>.csv` found in `dir` (other files are ignored).
std::vector<EmbeddingSet> load_embedding_dir(const std::filesystem::path& dir);

class WhitenError : public Error {
public:
    WhitenError(const std::string& what, Eigen::Index effective_rank)
        : Error(what), effective_rank_(effective_rank) {}
    Eigen::Index effective_rank() const { return effective_rank_; }

private:
    Eigen::Index effective_rank_;
};

struct WhitenModel {
    std::string category;
    Eigen::VectorXd mean;             // length p
    Eigen::MatrixXd components;       // d x p, orthonormal rows
    Eigen::VectorXd singular_values;  // length d, descending, positive
    std::size_t fit_count = 0;

    Eigen::Index output_dim() const { return components.rows(); }
    Eigen::Index input_dim() const { return components.cols(); }
};

/// Top-d PCA components of the centred embedding matrix. Requires
/// 1 <= d <= min(n-1, p) and d no larger than the numerical rank.
WhitenModel fit_whitener(const EmbeddingSet& embeddings, Eigen::Index d);

/// z = sqrt(n) * diag(1/sigma) * U_d * (e - mean). Over the fit set the
/// whitened vectors have identity covariance (1/n normalisation).
Eigen::VectorXd whiten(const WhitenModel& model, const Eigen::Ref<const Eigen::VectorXd>& e);

/// Whitened encodings of one category, rows aligned with `firm_ids`.
struct ResidualEncoding {
    std::string category;
    std::vector<std::string> firm_ids;
    Eigen::MatrixXd vectors;  // n x d
};

ResidualEncoding whiten_all(const WhitenModel& model, const EmbeddingSet& embeddings);

/// Versioned text artifact; values are written with round-trip precision.
void save_model(const WhitenModel& model, const std::filesystem::path& path);
WhitenModel load_model(const std::filesystem::path& path);

}  // namespace xmf
