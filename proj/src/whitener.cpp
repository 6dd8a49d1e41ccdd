#include "xmf/whitener.hpp"

#include "xmf/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/core.h>

namespace xmf {

EmbeddingSet load_embeddings(const std::filesystem::path& path, std::string category)
{
    const auto t = csv::read(path);
    if (t.header.size() < 2 || t.header.front() != "firm_id")
        throw Error(fmt::format("{}: expected header 'firm_id,v1,...'", path.string()));
    const auto p = static_cast<Eigen::Index>(t.header.size() - 1);
    EmbeddingSet set;
    set.category = std::move(category);
    set.vectors.resize(static_cast<Eigen::Index>(t.rows.size()), p);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        set.firm_ids.push_back(t.rows[r][0]);
        for (Eigen::Index c = 0; c < p; ++c) {
            const double v = csv::to_double(t.rows[r][static_cast<std::size_t>(c + 1)], t, r);
            if (!std::isfinite(v))
                throw Error(fmt::format("{}:{}: non-finite embedding value", path.string(), t.line_numbers[r]));
            set.vectors(static_cast<Eigen::Index>(r), c) = v;
        }
    }
    return set;
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path)
{
    std::string out = "firm_id";
    for (Eigen::Index c = 0; c < set.dim(); ++c)
        out += fmt::format(",v{}", c + 1);
    out += '\n';
    for (std::size_t r = 0; r < set.size(); ++r) {
        out += set.firm_ids[r];
        for (Eigen::Index c = 0; c < set.dim(); ++c)
            out += fmt::format(",{}", set.vectors(static_cast<Eigen::Index>(r), c));
        out += '\n';
    }
    csv::write_atomic(path, out);
}

std::vector<EmbeddingSet> load_embedding_dir(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir))
        throw Error(fmt::format("embedding directory '{}' does not exist", dir.string()));
    std::vector<EmbeddingSet> out;
    for (auto category : kSchemaCategories) {
        const auto path = dir / (std::string(category) + ".csv");
        if (std::filesystem::exists(path))
            out.push_back(load_embeddings(path, std::string(category)));
    }
    if (out.empty())
        throw Error(fmt::format("no category embedding files found in '{}'", dir.string()));
    return out;
}

WhitenModel fit_whitener(const EmbeddingSet& embeddings, Eigen::Index d)
{
    const auto n = static_cast<Eigen::Index>(embeddings.size());
    const Eigen::Index p = embeddings.dim();
    if (n < 2)
        throw WhitenError(fmt::format("category '{}': need at least 2 vectors to fit, got {}", embeddings.category, n), 0);
    if (!embeddings.vectors.allFinite())
        throw WhitenError(fmt::format("category '{}': non-finite embedding entries", embeddings.category), 0);

    WhitenModel model;
    model.category = embeddings.category;
    model.fit_count = static_cast<std::size_t>(n);
    model.mean = embeddings.vectors.colwise().mean().transpose();
    const Eigen::MatrixXd centred = embeddings.vectors.rowwise() - model.mean.transpose();

    Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double tol = s.size() > 0 ? static_cast<double>(std::max(n, p)) * std::numeric_limits<double>::epsilon() * s(0)
                                    : 0.0;
    Eigen::Index rank = 0;
    for (Eigen::Index k = 0; k < s.size(); ++k)
        if (s(k) > tol && s(k) > 0.0)
            ++rank;

    if (d < 1 || d > std::min(n - 1, p) || d > rank)
        throw WhitenError(fmt::format("category '{}': requested dimension {} but effective rank is {} (n={}, p={})",
                                      embeddings.category, d, rank, n, p),
                          rank);

    model.components = svd.matrixV().leftCols(d).transpose();
    model.singular_values = s.head(d);
    return model;
}

Eigen::VectorXd whiten(const WhitenModel& model, const Eigen::Ref<const Eigen::VectorXd>& e)
{
    if (e.size() != model.input_dim())
        throw Error(fmt::format("whiten: vector length {} does not match model input dimension {}", e.size(),
                                model.input_dim()));
    const double scale = std::sqrt(static_cast<double>(model.fit_count));
    Eigen::VectorXd z = model.components * (e - model.mean);
    return scale * z.cwiseQuotient(model.singular_values);
}

ResidualEncoding whiten_all(const WhitenModel& model, const EmbeddingSet& embeddings)
{
    if (embeddings.dim() != model.input_dim())
        throw Error(fmt::format("whiten: embedding dimension {} does not match model input dimension {}",
                                embeddings.dim(), model.input_dim()));
    ResidualEncoding out;
    out.category = embeddings.category;
    out.firm_ids = embeddings.firm_ids;
    const double scale = std::sqrt(static_cast<double>(model.fit_count));
    const Eigen::MatrixXd centred = embeddings.vectors.rowwise() - model.mean.transpose();
    out.vectors = scale * (centred * model.components.transpose()) * model.singular_values.cwiseInverse().asDiagonal();
    return out;
}

namespace {
constexpr std::string_view kModelMagic = "xmf-whiten-model";
constexpr int kModelVersion = 1;
}  // namespace

void save_model(const WhitenModel& model, const std::filesystem::path& path)
{
    std::string out = fmt::format("{} {}\n", kModelMagic, kModelVersion);
    out += fmt::format("category {}\n", model.category);
    out += fmt::format("n {}\np {}\nd {}\n", model.fit_count, model.input_dim(), model.output_dim());
    out += "mean";
    for (Eigen::Index k = 0; k < model.mean.size(); ++k)
        out += fmt::format(" {}", model.mean(k));
    out += "\nsingular_values";
    for (Eigen::Index k = 0; k < model.singular_values.size(); ++k)
        out += fmt::format(" {}", model.singular_values(k));
    out += '\n';
    for (Eigen::Index r = 0; r < model.components.rows(); ++r) {
        out += "component";
        for (Eigen::Index c = 0; c < model.components.cols(); ++c)
            out += fmt::format(" {}", model.components(r, c));
        out += '\n';
    }
    csv::write_atomic(path, out);
}

WhitenModel load_model(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(fmt::format("cannot open whitening model '{}'", path.string()));
    auto fail = [&](std::string_view what) { return Error(fmt::format("{}: {}", path.string(), what)); };
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != kModelMagic)
        throw fail("not a whitening model file");
    if (version != kModelVersion)
        throw fail(fmt::format("unsupported model version {}", version));
    WhitenModel m;
    std::string key;
    std::size_t n = 0;
    Eigen::Index p = 0, d = 0;
    in >> key >> m.category;
    in >> key >> n >> key >> p >> key >> d;
    if (!in || p <= 0 || d <= 0)
        throw fail("malformed header");
    m.fit_count = n;
    m.mean.resize(p);
    m.singular_values.resize(d);
    m.components.resize(d, p);
    in >> key;
    for (Eigen::Index k = 0; k < p; ++k)
        in >> m.mean(k);
    in >> key;
    for (Eigen::Index k = 0; k < d; ++k)
        in >> m.singular_values(k);
    for (Eigen::Index r = 0; r < d; ++r) {
        in >> key;
        for (Eigen::Index c = 0; c < p; ++c)
            in >> m.components(r, c);
    }
    if (!in)
        throw fail("truncated model file");
    return m;
}

}  // namespace xmf
