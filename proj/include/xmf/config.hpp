#pragma once

#include "xmf/common.hpp"
#include "xmf/factor_engine.hpp"
#include "xmf/graph_builder.hpp"
#include "xmf/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace xmf {

/// `key = value` lines; `#` starts a comment. Later keys overwrite earlier ones.
class KeyValues {
public:
    static KeyValues parse(std::string_view text, const std::string& label = "<config>");
    static KeyValues load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> get(const std::string& key) const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

struct RunConfig {
    // Inputs. Relative paths in a config file resolve against its directory.
    std::filesystem::path firms;
    std::filesystem::path prices;
    std::optional<std::filesystem::path> calendar;
    std::optional<std::filesystem::path> embeddings;
    std::optional<std::filesystem::path> agent_labels;
    /// CSV with a firm_id or source_id column restricting event sources.
    std::optional<std::filesystem::path> source_firms;

    Market source = Market::US;
    Market target = Market::JP;
    std::vector<Market> markets{kAllMarkets.begin(), kAllMarkets.end()};

    int dim = 128;
    double kappa = 50.0;
    double tau = 0.99;
    int lookback = 12;
    FactorVariant variant = FactorVariant::neutralized;
    PeerScheme scheme = PeerScheme::text_sigmoid;
    double cost_bp = 2.0;
    std::optional<Month> start;
    std::optional<Month> end;
    /// Permutes source firms inside the peer weights (placebo graph).
    bool shuffle_graph = false;
    std::size_t corr_window = 252;
    std::size_t corr_min_overlap = 120;

    double threshold = 0.03;
    std::vector<std::size_t> ks{10, 20, 30, 60};
    std::size_t null_draws = 200;
    std::size_t bootstrap_draws = 2000;
    std::optional<std::set<Market>> excluded_markets;
    std::optional<Market> event_market;
    std::optional<Date> event_start;
    std::optional<Date> event_end;
    double window_years = 1.51;
    double min_confidence = 0.0;

    std::vector<int> sweep_dims{64, 128, 256, 512, 768, 1024};
    std::vector<int> sweep_lookbacks{1, 3, 6, 12, 24, 36};

    std::uint64_t seed = 20240930;
    std::filesystem::path out = "out";
    unsigned threads = 1;

    /// Applies recognised keys; throws on unknown keys or bad values.
    void apply(const KeyValues& kv, const std::filesystem::path& base_dir = {});
    /// Every setting that can change a report, as ordered key/value text.
    /// Excludes `out` and `threads`.
    std::map<std::string, std::string> resolved() const;
};

/// Reads a synthetic-world spec from key/value pairs. `markets` is a list of
/// MARKET:firms[:holiday_rate] entries.
SynthSpec synth_spec_from(const KeyValues& kv);

std::vector<std::string> split_list(std::string_view text);

}  // namespace xmf
