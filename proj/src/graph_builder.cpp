#include "xmf/graph_builder.hpp"

#include "xmf/csv.hpp"
#include "xmf/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <fmt/core.h>

namespace xmf {

// ---------------------------------------------------------------------------
// EncodingStore

EncodingStore::EncodingStore(const Universe& universe, const std::vector<ResidualEncoding>& encodings)
{
    const auto n = static_cast<Eigen::Index>(universe.size());
    for (const auto& enc : encodings) {
        names_.push_back(enc.category);
        auto& units = units_.emplace_back(n, enc.vectors.cols());
        units.setZero();
        auto& present = present_.emplace_back(universe.size(), 0);
        for (std::size_t r = 0; r < enc.firm_ids.size(); ++r) {
            auto f = universe.find(enc.firm_ids[r]);
            if (!f) {
                ++unknown_ids_;
                continue;
            }
            const auto row = enc.vectors.row(static_cast<Eigen::Index>(r));
            const double norm = row.norm();
            if (!(norm > 0.0) || !std::isfinite(norm))
                continue;
            units.row(static_cast<Eigen::Index>(*f)) = row / norm;
            present[*f] = 1;
        }
    }
}

bool EncodingStore::encoded(FirmIndex f) const
{
    for (const auto& p : present_)
        if (p[f])
            return true;
    return false;
}

// ---------------------------------------------------------------------------
// Scores

PairScore pair_score(std::span<const std::optional<Eigen::VectorXd>> zi,
                     std::span<const std::optional<Eigen::VectorXd>> zj)
{
    if (zi.size() != zj.size())
        throw Error("pair_score: category counts differ");
    PairScore out;
    double sum = 0.0;
    for (std::size_t c = 0; c < zi.size(); ++c) {
        if (!zi[c] || !zj[c])
            continue;
        const double ni = zi[c]->norm();
        const double nj = zj[c]->norm();
        if (!(ni > 0.0) || !(nj > 0.0))
            continue;
        sum += zi[c]->dot(*zj[c]) / (ni * nj);
        ++out.categories_used;
    }
    if (out.categories_used > 0)
        out.score = sum / out.categories_used;
    return out;
}

PairScore pair_score(const EncodingStore& store, FirmIndex i, FirmIndex j)
{
    PairScore out;
    double sum = 0.0;
    for (std::size_t c = 0; c < store.category_count(); ++c) {
        if (!store.has(i, c) || !store.has(j, c))
            continue;
        sum += store.unit(i, c).dot(store.unit(j, c));
        ++out.categories_used;
    }
    if (out.categories_used > 0)
        out.score = sum / out.categories_used;
    return out;
}

SimilarityGraph build_graph(const EncodingStore& store, const Universe& universe, Market source, Market target,
                            unsigned threads)
{
    SimilarityGraph g;
    g.source = source;
    g.target = target;
    for (FirmIndex f : universe.members(target))
        if (store.encoded(f))
            g.targets.push_back(f);
    for (FirmIndex f : universe.members(source))
        if (store.encoded(f))
            g.sources.push_back(f);
    if (g.targets.empty() || g.sources.empty())
        throw Error(fmt::format("cannot build {}->{} graph: {} side has no encoded firms", to_string(source),
                                to_string(target), g.targets.empty() ? "target" : "source"));
    const std::size_t ns = g.sources.size();
    g.scores.assign(g.targets.size() * ns, kMissing);
    g.categories_used.assign(g.targets.size() * ns, 0);
    parallel_for(g.targets.size(), threads, [&](std::size_t t) {
        for (std::size_t s = 0; s < ns; ++s) {
            if (g.targets[t] == g.sources[s])
                continue;
            const auto ps = pair_score(store, g.targets[t], g.sources[s]);
            g.scores[t * ns + s] = ps.score;
            g.categories_used[t * ns + s] = static_cast<unsigned char>(ps.categories_used);
        }
    });
    return g;
}

// ---------------------------------------------------------------------------
// Weights

double sigmoid_weight(double rank, SigmoidParams params)
{
    return 1.0 / (1.0 + std::exp(-params.kappa * (rank - params.tau)));
}

std::vector<double> percentile_ranks(std::span<const double> scores)
{
    std::vector<std::size_t> order;
    order.reserve(scores.size());
    for (std::size_t k = 0; k < scores.size(); ++k)
        if (!std::isnan(scores[k]))
            order.push_back(k);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> ranks(scores.size(), kMissing);
    const auto n = static_cast<double>(order.size());
    std::size_t lo = 0;
    while (lo < order.size()) {
        std::size_t hi = lo;
        while (hi + 1 < order.size() && scores[order[hi + 1]] == scores[order[lo]])
            ++hi;
        // Positions lo..hi (0-based) share the mean 1-based position.
        const double mean_pos = (static_cast<double>(lo + 1) + static_cast<double>(hi + 1)) / 2.0;
        for (std::size_t k = lo; k <= hi; ++k)
            ranks[order[k]] = mean_pos / n;
        lo = hi + 1;
    }
    return ranks;
}

std::string_view to_string(PeerScheme s)
{
    switch (s) {
    case PeerScheme::text_sigmoid: return "text_sigmoid";
    case PeerScheme::gics_equal: return "gics_equal";
    case PeerScheme::corr_sigmoid: return "corr_sigmoid";
    }
    return "?";
}

PeerScheme parse_peer_scheme(std::string_view text)
{
    if (text == "text_sigmoid" || text == "text")
        return PeerScheme::text_sigmoid;
    if (text == "gics_equal" || text == "gics")
        return PeerScheme::gics_equal;
    if (text == "corr_sigmoid" || text == "corr")
        return PeerScheme::corr_sigmoid;
    throw Error(fmt::format("unknown peer scheme '{}'", text));
}

namespace {

PeerWeights ranked_sigmoid(const SimilarityGraph& graph, PeerScheme scheme, SigmoidParams params)
{
    PeerWeights w;
    w.scheme = scheme;
    w.source = graph.source;
    w.target = graph.target;
    w.targets = graph.targets;
    w.sources = graph.sources;
    const std::size_t ns = graph.sources.size();
    w.alpha.assign(graph.scores.size(), 0.0);
    w.coverage.assign(graph.targets.size(), {});
    for (std::size_t t = 0; t < graph.targets.size(); ++t) {
        std::span<const double> row(graph.scores.data() + t * ns, ns);
        auto& cov = w.coverage[t];
        const auto ranks = percentile_ranks(row);
        std::size_t scored = 0;
        for (std::size_t s = 0; s < ns; ++s) {
            if (std::isnan(ranks[s]))
                continue;
            ++scored;
            w.alpha[t * ns + s] = sigmoid_weight(ranks[s], params);
            if (!graph.categories_used.empty()) {
                const auto used = graph.categories_used[t * ns + s];
                if (used > 0 && used < 3)
                    ++cov.low_confidence_pairs;
            }
        }
        cov.single_peer = scored == 1;
        cov.uncovered = scored == 0;
    }
    return w;
}

}  // namespace

PeerWeights sigmoid_weights(const SimilarityGraph& graph, SigmoidParams params)
{
    return ranked_sigmoid(graph, PeerScheme::text_sigmoid, params);
}

PeerWeights gics_equal_weights(const Universe& universe, Market source, Market target)
{
    PeerWeights w;
    w.scheme = PeerScheme::gics_equal;
    w.source = source;
    w.target = target;
    w.targets = universe.members(target);
    w.sources = universe.members(source);
    const std::size_t ns = w.sources.size();
    w.alpha.assign(w.targets.size() * ns, 0.0);
    w.coverage.assign(w.targets.size(), {});
    for (std::size_t t = 0; t < w.targets.size(); ++t) {
        const auto& sector = universe.firm(w.targets[t]).sector;
        std::size_t peers = 0;
        for (std::size_t s = 0; s < ns; ++s) {
            if (w.sources[s] == w.targets[t] || universe.firm(w.sources[s]).sector != sector)
                continue;
            w.alpha[t * ns + s] = 1.0;
            ++peers;
        }
        w.coverage[t].uncovered = peers == 0;
        w.coverage[t].single_peer = peers == 1;
    }
    return w;
}

SimilarityGraph correlation_graph(const PricePanel& prices, Market source, Market target, Date as_of,
                                  CorrelationParams corr, unsigned threads)
{
    const auto& universe = prices.universe();
    const auto& tcal = prices.calendar(target);
    const auto& scal = prices.calendar(source);
    const std::size_t end = tcal.first_after(as_of);  // one past the last date <= as_of
    if (end == 0)
        throw Error(fmt::format("correlation as-of date {} precedes the {} calendar", format_date(as_of),
                                to_string(target)));
    const std::size_t begin = end > corr.window ? end - corr.window : 0;
    const std::size_t len = end - begin;

    auto series = [&](FirmIndex f, bool is_target) {
        std::vector<double> r(len, kMissing);
        for (std::size_t k = 0; k < len; ++k) {
            const Date d = tcal.dates[begin + k];
            std::optional<std::size_t> pos = is_target ? std::optional<std::size_t>(begin + k) : scal.index_of(d);
            if (!pos)
                continue;
            if (auto x = prices.daily_close_return(f, *pos))
                r[k] = *x;
        }
        return r;
    };

    SimilarityGraph g;
    g.source = source;
    g.target = target;
    g.targets = universe.members(target);
    g.sources = universe.members(source);
    std::vector<std::vector<double>> tr(g.targets.size()), sr(g.sources.size());
    for (std::size_t t = 0; t < g.targets.size(); ++t)
        tr[t] = series(g.targets[t], true);
    for (std::size_t s = 0; s < g.sources.size(); ++s)
        sr[s] = series(g.sources[s], false);

    const std::size_t ns = g.sources.size();
    g.scores.assign(g.targets.size() * ns, kMissing);
    parallel_for(g.targets.size(), threads, [&](std::size_t t) {
        for (std::size_t s = 0; s < ns; ++s) {
            if (g.targets[t] == g.sources[s])
                continue;
            double sx = 0, sy = 0, n = 0;
            for (std::size_t k = 0; k < len; ++k) {
                if (std::isnan(tr[t][k]) || std::isnan(sr[s][k]))
                    continue;
                sx += tr[t][k];
                sy += sr[s][k];
                n += 1;
            }
            if (n < static_cast<double>(corr.min_overlap))
                continue;
            const double mx = sx / n, my = sy / n;
            double sxx = 0, syy = 0, sxy = 0;
            for (std::size_t k = 0; k < len; ++k) {
                if (std::isnan(tr[t][k]) || std::isnan(sr[s][k]))
                    continue;
                const double dx = tr[t][k] - mx, dy = sr[s][k] - my;
                sxx += dx * dx;
                syy += dy * dy;
                sxy += dx * dy;
            }
            if (!(sxx > 0.0) || !(syy > 0.0))
                continue;
            g.scores[t * ns + s] = sxy / std::sqrt(sxx * syy);
        }
    });
    return g;
}

PeerWeights corr_weights(const PricePanel& prices, Market source, Market target, Date as_of, CorrelationParams corr,
                         SigmoidParams params, unsigned threads)
{
    return ranked_sigmoid(correlation_graph(prices, source, target, as_of, corr, threads), PeerScheme::corr_sigmoid,
                          params);
}

// ---------------------------------------------------------------------------
// Neighbours

NeighborList top_k_neighbors(const EncodingStore& store, const Universe& universe, FirmIndex source, std::size_t k,
                             const std::set<Market>& excluded_markets)
{
    if (!store.encoded(source))
        throw Error(fmt::format("firm '{}' has no encodings", universe.firm(source).id));
    std::vector<Neighbor> candidates;
    for (FirmIndex f = 0; f < universe.size(); ++f) {
        if (f == source || excluded_markets.count(universe.firm(f).market))
            continue;
        const auto ps = pair_score(store, source, f);
        if (!std::isnan(ps.score))
            candidates.push_back(Neighbor{f, ps.score});
    }
    std::sort(candidates.begin(), candidates.end(), [&](const Neighbor& a, const Neighbor& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return universe.firm(a.firm).id < universe.firm(b.firm).id;
    });
    NeighborList out;
    out.fewer_than_k = candidates.size() < k;
    if (candidates.size() > k)
        candidates.resize(k);
    out.neighbors = std::move(candidates);
    return out;
}

// ---------------------------------------------------------------------------
// Export

void write_graph_csv(const SimilarityGraph& graph, const PeerWeights& weights, const Universe& universe,
                     const std::filesystem::path& path)
{
    if (weights.targets != graph.targets || weights.sources != graph.sources)
        throw Error("write_graph_csv: weights do not match graph layout");
    std::string out = "target_id,source_id,score,alpha\n";
    const std::size_t ns = graph.sources.size();
    for (std::size_t t = 0; t < graph.targets.size(); ++t)
        for (std::size_t s = 0; s < ns; ++s) {
            const double score = graph.scores[t * ns + s];
            if (std::isnan(score))
                continue;
            out += fmt::format("{},{},{},{}\n", universe.firm(graph.targets[t]).id, universe.firm(graph.sources[s]).id,
                               score, weights.alpha[t * ns + s]);
        }
    csv::write_atomic(path, out);
}

namespace {

constexpr char kGraphMagic[8] = {'X', 'M', 'F', 'G', 'R', 'A', 'P', 'H'};
constexpr std::uint32_t kGraphVersion = 1;

void put_u32(std::string& out, std::uint32_t v)
{
    for (int b = 0; b < 4; ++b)
        out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

void put_f64(std::string& out, double v)
{
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b)
        out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

void put_str(std::string& out, const std::string& s)
{
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}
    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
        pos_ += 4;
        return v;
    }
    double f64()
    {
        need(8);
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }
    unsigned char u8()
    {
        need(1);
        return static_cast<unsigned char>(data_[pos_++]);
    }
    std::string str()
    {
        const auto n = u32();
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string_view raw(std::size_t n)
    {
        need(n);
        std::string_view v(data_.data() + pos_, n);
        pos_ += n;
        return v;
    }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > data_.size())
            throw Error("graph file truncated");
    }
    std::string data_;
    std::size_t pos_ = 0;
};

}  // namespace

void write_graph_binary(const SimilarityGraph& graph, const PeerWeights& weights, const Universe& universe,
                        const std::filesystem::path& path)
{
    if (weights.targets != graph.targets || weights.sources != graph.sources)
        throw Error("write_graph_binary: weights do not match graph layout");
    std::string out(kGraphMagic, sizeof kGraphMagic);
    put_u32(out, kGraphVersion);
    out.push_back(static_cast<char>(graph.source));
    out.push_back(static_cast<char>(graph.target));
    out.push_back(static_cast<char>(weights.scheme));
    put_u32(out, static_cast<std::uint32_t>(graph.targets.size()));
    put_u32(out, static_cast<std::uint32_t>(graph.sources.size()));
    for (FirmIndex f : graph.targets)
        put_str(out, universe.firm(f).id);
    for (FirmIndex f : graph.sources)
        put_str(out, universe.firm(f).id);
    for (double s : graph.scores)
        put_f64(out, s);
    for (double a : weights.alpha)
        put_f64(out, a);
    for (std::size_t k = 0; k < graph.scores.size(); ++k)
        out.push_back(static_cast<char>(graph.categories_used.empty() ? 0 : graph.categories_used[k]));
    csv::write_atomic(path, out);
}

LoadedGraph read_graph_binary(const Universe& universe, const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(fmt::format("cannot open graph file '{}'", path.string()));
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(data));
    if (std::memcmp(r.raw(sizeof kGraphMagic).data(), kGraphMagic, sizeof kGraphMagic) != 0)
        throw Error(fmt::format("'{}' is not a graph file", path.string()));
    if (const auto v = r.u32(); v != kGraphVersion)
        throw Error(fmt::format("'{}': unsupported graph version {}", path.string(), v));
    LoadedGraph lg;
    auto& g = lg.graph;
    auto& w = lg.weights;
    g.source = static_cast<Market>(r.u8());
    g.target = static_cast<Market>(r.u8());
    w.scheme = static_cast<PeerScheme>(r.u8());
    const auto nt = r.u32();
    const auto ns = r.u32();
    for (std::uint32_t k = 0; k < nt; ++k)
        g.targets.push_back(universe.require(r.str()));
    for (std::uint32_t k = 0; k < ns; ++k)
        g.sources.push_back(universe.require(r.str()));
    const std::size_t cells = static_cast<std::size_t>(nt) * ns;
    g.scores.resize(cells);
    for (auto& s : g.scores)
        s = r.f64();
    w.alpha.resize(cells);
    for (auto& a : w.alpha)
        a = r.f64();
    g.categories_used.resize(cells);
    for (auto& c : g.categories_used)
        c = r.u8();
    w.source = g.source;
    w.target = g.target;
    w.targets = g.targets;
    w.sources = g.sources;
    w.coverage.assign(nt, {});
    for (std::size_t t = 0; t < nt; ++t) {
        std::size_t peers = 0;
        for (std::size_t s = 0; s < ns; ++s) {
            if (w.alpha[t * ns + s] > 0.0)
                ++peers;
            const auto used = g.categories_used[t * ns + s];
            if (used > 0 && used < 3)
                ++w.coverage[t].low_confidence_pairs;
        }
        w.coverage[t].uncovered = peers == 0;
        w.coverage[t].single_peer = peers == 1;
    }
    return lg;
}

}  // namespace xmf
