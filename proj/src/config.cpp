#include "xmf/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

namespace xmf {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text)
{
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end)
        throw Error(fmt::format("config key '{}': cannot parse '{}' as a number", key, text));
    return value;
}

bool parse_flag(const std::string& key, const std::string& text)
{
    if (text == "1" || text == "true" || text == "yes")
        return true;
    if (text == "0" || text == "false" || text == "no")
        return false;
    throw Error(fmt::format("config key '{}': expected true/false, got '{}'", key, text));
}

std::string join(const auto& items, auto&& fmt_one)
{
    std::string out;
    for (const auto& x : items) {
        if (!out.empty())
            out += ',';
        out += fmt_one(x);
    }
    return out;
}

std::string num(double x) { return fmt::format("{}", x); }

}  // namespace

std::vector<std::string> split_list(std::string_view text)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto comma = text.find(',', start);
        if (comma == std::string_view::npos)
            comma = text.size();
        auto item = trim(text.substr(start, comma - start));
        if (!item.empty())
            out.push_back(std::move(item));
        start = comma + 1;
    }
    return out;
}

KeyValues KeyValues::parse(std::string_view text, const std::string& label)
{
    KeyValues kv;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        const auto body = trim(line);
        if (body.empty())
            continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw Error(fmt::format("{}:{}: expected 'key = value'", label, line_no));
        auto key = trim(std::string_view(body).substr(0, eq));
        if (key.empty())
            throw Error(fmt::format("{}:{}: empty key", label, line_no));
        kv.values_[key] = trim(std::string_view(body).substr(eq + 1));
    }
    return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(fmt::format("cannot open config file '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

std::optional<std::string> KeyValues::get(const std::string& key) const
{
    auto it = values_.find(key);
    if (it == values_.end())
        return std::nullopt;
    return it->second;
}

void RunConfig::apply(const KeyValues& kv, const std::filesystem::path& base_dir)
{
    auto path = [&](const std::string& v) {
        std::filesystem::path p(v);
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    auto markets_of = [](const std::string& v) {
        std::vector<Market> ms;
        for (const auto& item : split_list(v))
            ms.push_back(market_from_string(item));
        return ms;
    };
    for (const auto& [key, value] : kv.values()) {
        if (value.empty())
            continue;  // unset optional, as written by resolved()
        if (key == "firms")
            firms = path(value);
        else if (key == "prices")
            prices = path(value);
        else if (key == "calendar")
            calendar = path(value);
        else if (key == "embeddings")
            embeddings = path(value);
        else if (key == "agent_labels")
            agent_labels = path(value);
        else if (key == "source_firms")
            source_firms = path(value);
        else if (key == "source")
            source = market_from_string(value);
        else if (key == "target")
            target = market_from_string(value);
        else if (key == "markets")
            markets = markets_of(value);
        else if (key == "dim")
            dim = parse_number<int>(key, value);
        else if (key == "kappa")
            kappa = parse_number<double>(key, value);
        else if (key == "tau")
            tau = parse_number<double>(key, value);
        else if (key == "lookback")
            lookback = parse_number<int>(key, value);
        else if (key == "variant")
            variant = parse_factor_variant(value);
        else if (key == "scheme")
            scheme = parse_peer_scheme(value);
        else if (key == "cost_bp")
            cost_bp = parse_number<double>(key, value);
        else if (key == "start")
            start = parse_month(value);
        else if (key == "end")
            end = parse_month(value);
        else if (key == "shuffle_graph")
            shuffle_graph = parse_flag(key, value);
        else if (key == "corr_window")
            corr_window = parse_number<std::size_t>(key, value);
        else if (key == "corr_min_overlap")
            corr_min_overlap = parse_number<std::size_t>(key, value);
        else if (key == "threshold")
            threshold = parse_number<double>(key, value);
        else if (key == "k") {
            ks.clear();
            for (const auto& item : split_list(value))
                ks.push_back(parse_number<std::size_t>(key, item));
        } else if (key == "null_draws")
            null_draws = parse_number<std::size_t>(key, value);
        else if (key == "bootstrap_draws")
            bootstrap_draws = parse_number<std::size_t>(key, value);
        else if (key == "exclude_markets") {
            if (value == "home")
                excluded_markets.reset();
            else {
                std::set<Market> s;
                for (Market m : markets_of(value))
                    s.insert(m);
                excluded_markets = s;
            }
        } else if (key == "event_market")
            event_market = market_from_string(value);
        else if (key == "event_start")
            event_start = parse_date(value);
        else if (key == "event_end")
            event_end = parse_date(value);
        else if (key == "window_years")
            window_years = parse_number<double>(key, value);
        else if (key == "min_confidence")
            min_confidence = parse_number<double>(key, value);
        else if (key == "sweep_dims") {
            sweep_dims.clear();
            for (const auto& item : split_list(value))
                sweep_dims.push_back(parse_number<int>(key, item));
        } else if (key == "sweep_lookbacks") {
            sweep_lookbacks.clear();
            for (const auto& item : split_list(value))
                sweep_lookbacks.push_back(parse_number<int>(key, item));
        } else if (key == "seed")
            seed = parse_number<std::uint64_t>(key, value);
        else if (key == "out")
            out = path(value);
        else if (key == "threads")
            threads = parse_number<unsigned>(key, value);
        else
            throw Error(fmt::format("unknown config key '{}'", key));
    }
    if (dim < 1)
        throw Error("dim must be positive");
    if (lookback < 1)
        throw Error("lookback must be positive");
    if (ks.empty())
        throw Error("k needs at least one basket size");
    if (!(cost_bp >= 0.0))
        throw Error("cost_bp must be non-negative");
}

std::map<std::string, std::string> RunConfig::resolved() const
{
    std::map<std::string, std::string> r;
    r["firms"] = firms.string();
    r["prices"] = prices.string();
    r["calendar"] = calendar ? calendar->string() : "";
    r["embeddings"] = embeddings ? embeddings->string() : "";
    r["agent_labels"] = agent_labels ? agent_labels->string() : "";
    r["source_firms"] = source_firms ? source_firms->string() : "";
    r["source"] = std::string(to_string(source));
    r["target"] = std::string(to_string(target));
    r["markets"] = join(markets, [](Market m) { return std::string(to_string(m)); });
    r["dim"] = std::to_string(dim);
    r["kappa"] = num(kappa);
    r["tau"] = num(tau);
    r["lookback"] = std::to_string(lookback);
    r["variant"] = std::string(to_string(variant));
    r["scheme"] = std::string(to_string(scheme));
    r["cost_bp"] = num(cost_bp);
    r["start"] = start ? format_month(*start) : "";
    r["end"] = end ? format_month(*end) : "";
    r["shuffle_graph"] = shuffle_graph ? "true" : "false";
    r["corr_window"] = std::to_string(corr_window);
    r["corr_min_overlap"] = std::to_string(corr_min_overlap);
    r["threshold"] = num(threshold);
    r["k"] = join(ks, [](std::size_t k) { return std::to_string(k); });
    r["null_draws"] = std::to_string(null_draws);
    r["bootstrap_draws"] = std::to_string(bootstrap_draws);
    r["exclude_markets"] =
        excluded_markets ? join(*excluded_markets, [](Market m) { return std::string(to_string(m)); }) : "home";
    r["event_market"] = event_market ? std::string(to_string(*event_market)) : "";
    r["event_start"] = event_start ? format_date(*event_start) : "";
    r["event_end"] = event_end ? format_date(*event_end) : "";
    r["window_years"] = num(window_years);
    r["min_confidence"] = num(min_confidence);
    r["sweep_dims"] = join(sweep_dims, [](int x) { return std::to_string(x); });
    r["sweep_lookbacks"] = join(sweep_lookbacks, [](int x) { return std::to_string(x); });
    r["seed"] = std::to_string(seed);
    return r;
}

SynthSpec synth_spec_from(const KeyValues& kv)
{
    SynthSpec s;
    s.markets.clear();
    auto opt_market = [](const std::string& v) -> std::optional<Market> {
        if (v.empty() || v == "none")
            return std::nullopt;
        return market_from_string(v);
    };
    for (const auto& [key, value] : kv.values()) {
        if (key == "markets") {
            for (const auto& item : split_list(value)) {
                MarketSpec ms;
                const auto c1 = item.find(':');
                if (c1 == std::string::npos)
                    throw Error(fmt::format("synth markets entry '{}' must be MARKET:firms[:holiday_rate]", item));
                ms.market = market_from_string(item.substr(0, c1));
                const auto c2 = item.find(':', c1 + 1);
                ms.firms = parse_number<std::size_t>(key, item.substr(c1 + 1, c2 == std::string::npos ? std::string::npos : c2 - c1 - 1));
                if (c2 != std::string::npos)
                    ms.holiday_rate = parse_number<double>(key, item.substr(c2 + 1));
                s.markets.push_back(ms);
            }
        } else if (key == "start")
            s.start = parse_month(value);
        else if (key == "months")
            s.months = parse_number<int>(key, value);
        else if (key == "days_per_month")
            s.days_per_month = parse_number<int>(key, value);
        else if (key == "sectors_per_market")
            s.sectors_per_market = parse_number<int>(key, value);
        else if (key == "market_sd")
            s.market_sd = parse_number<double>(key, value);
        else if (key == "sector_sd")
            s.sector_sd = parse_number<double>(key, value);
        else if (key == "idio_sd")
            s.idio_sd = parse_number<double>(key, value);
        else if (key == "lead_source")
            s.lead_source = opt_market(value);
        else if (key == "lead_target")
            s.lead_target = opt_market(value);
        else if (key == "beta")
            s.beta = parse_number<double>(key, value);
        else if (key == "lag_months")
            s.lag_months = parse_number<int>(key, value);
        else if (key == "sigma")
            s.sigma = parse_number<double>(key, value);
        else if (key == "pair_correlation") {
            // resolved after all keys are read
        } else if (key == "allow_contemporaneous")
            s.allow_contemporaneous = parse_flag(key, value);
        else if (key == "event_market")
            s.event_market = opt_market(value);
        else if (key == "event_sources")
            s.event_sources = parse_number<std::size_t>(key, value);
        else if (key == "event_neighbors")
            s.event_neighbors = parse_number<std::size_t>(key, value);
        else if (key == "jumps_per_source")
            s.jumps_per_source = parse_number<std::size_t>(key, value);
        else if (key == "jump_size")
            s.jump_size = parse_number<double>(key, value);
        else if (key == "echo")
            s.echo = parse_number<double>(key, value);
        else if (key == "embed_dim")
            s.embed_dim = parse_number<std::size_t>(key, value);
        else if (key == "categories")
            s.categories = parse_number<std::size_t>(key, value);
        else if (key == "style_rank")
            s.style_rank = parse_number<std::size_t>(key, value);
        else if (key == "style_sd")
            s.style_sd = parse_number<double>(key, value);
        else if (key == "latent_sd")
            s.latent_sd = parse_number<double>(key, value);
        else if (key == "partner_noise")
            s.partner_noise = parse_number<double>(key, value);
        else if (key == "embed_noise")
            s.embed_noise = parse_number<double>(key, value);
        else if (key == "seed")
            s.seed = parse_number<std::uint64_t>(key, value);
        else
            throw Error(fmt::format("unknown synth key '{}'", key));
    }
    if (auto rho = kv.get("pair_correlation")) {
        if (kv.has("sigma"))
            throw Error("synth spec: give sigma or pair_correlation, not both");
        s.sigma = sigma_for_correlation(s, parse_number<double>("pair_correlation", *rho));
    }
    s.validate();
    return s;
}

}  // namespace xmf
