#include "xmf/synth.hpp"

#include "xmf/csv.hpp"
#include "xmf/event_lab.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <fmt/core.h>

namespace xmf {

namespace {

enum Stream : std::uint64_t {
    kCalendar = 1,
    kMarketShock,
    kSectorShock,
    kIdio,
    kLinks,
    kEvents,
    kEmbedStyle,
    kEmbedLatent,
    kEmbedNoise,
    kLevels,
};

std::mt19937_64 stream(const SynthSpec& spec, Stream s, std::uint64_t a = 0, std::uint64_t b = 0)
{
    return std::mt19937_64(derive_seed(spec.seed, s, a, b));
}

const MarketSpec* find_market(const SynthSpec& spec, Market m)
{
    for (const auto& ms : spec.markets)
        if (ms.market == m)
            return &ms;
    return nullptr;
}

/// Draws `count` distinct positions from [0, n) in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, std::mt19937_64& rng)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t k = 0; k < count; ++k)
        std::swap(idx[k], idx[k + uniform_below(rng, n - k)]);
    idx.resize(count);
    return idx;
}

std::vector<Date> month_weekdays(Month m)
{
    std::vector<Date> out;
    for (Date d = m.first_day(); Month::of(d) == m; d += std::chrono::days{1}) {
        const std::chrono::weekday wd{d};
        if (wd != std::chrono::Saturday && wd != std::chrono::Sunday)
            out.push_back(d);
    }
    return out;
}

double linked_idio_variance(const SynthSpec& spec)
{
    const double s = *spec.sigma;
    return s * s / spec.days_per_month - spec.market_sd * spec.market_sd - spec.sector_sd * spec.sector_sd;
}

}  // namespace

void SynthSpec::validate() const
{
    if (markets.empty())
        throw Error("synth spec: no markets");
    std::set<Market> seen;
    for (const auto& m : markets) {
        if (!seen.insert(m.market).second)
            throw Error(fmt::format("synth spec: market {} listed twice", to_string(m.market)));
        if (m.firms < 2)
            throw Error(fmt::format("synth spec: market {} needs at least 2 firms", to_string(m.market)));
        if (!(m.holiday_rate >= 0.0 && m.holiday_rate < 1.0))
            throw Error("synth spec: holiday_rate must lie in [0, 1)");
    }
    if (months < 1 || days_per_month < 1 || days_per_month > 23)
        throw Error("synth spec: months >= 1 and days_per_month in [1, 23] required");
    if (sectors_per_market < 1)
        throw Error("synth spec: sectors_per_market must be positive");
    if (market_sd < 0 || sector_sd < 0 || idio_sd < 0)
        throw Error("synth spec: volatilities must be non-negative");
    if (lead_source.has_value() != lead_target.has_value())
        throw Error("synth spec: lead_source and lead_target go together");
    if (lead_source) {
        if (*lead_source == *lead_target)
            throw Error("synth spec: lead-lag plant needs two different markets");
        const auto* s = find_market(*this, *lead_source);
        const auto* t = find_market(*this, *lead_target);
        if (!s || !t)
            throw Error("synth spec: lead-lag market not in the market list");
        if (t->firms > s->firms)
            throw Error("synth spec: lead target has more firms than the source can pair");
        if (!(beta >= 0.0))
            throw Error("synth spec: beta must be non-negative");
        if (lag_months < 1 && !(allow_contemporaneous && lag_months == 0))
            throw Error(fmt::format("synth spec: lag_months must be >= 1, got {}", lag_months));
        if (sigma) {
            if (!(*sigma >= 0.0))
                throw Error("synth spec: sigma must be non-negative");
            if (linked_idio_variance(*this) < 0.0)
                throw Error("synth spec: sigma is smaller than the market and sector noise it contains");
        }
    }
    if (event_sources > 0) {
        if (!event_market || !find_market(*this, *event_market))
            throw Error("synth spec: event_market missing from the market list");
        const auto* em = find_market(*this, *event_market);
        if (event_sources > em->firms)
            throw Error("synth spec: more event sources than firms");
        std::size_t others = 0;
        for (const auto& m : markets)
            if (m.market != *event_market)
                others += m.firms;
        if (event_sources * event_neighbors > others)
            throw Error("synth spec: not enough foreign firms for disjoint event neighbours");
        if (jumps_per_source * 2 > static_cast<std::size_t>(months * days_per_month))
            throw Error("synth spec: too many jumps per source for the calendar");
    }
    if (embed_dim < 2 || categories < 1 || categories > kSchemaCategories.size() || style_rank >= embed_dim)
        throw Error("synth spec: invalid embedding shape");
}

double sigma_for_correlation(const SynthSpec& spec, double correlation)
{
    if (!(correlation > 0.0 && correlation < 1.0))
        throw Error("sigma_for_correlation: correlation must lie in (0, 1)");
    const double source_sd =
        std::sqrt(spec.days_per_month *
                  (spec.market_sd * spec.market_sd + spec.sector_sd * spec.sector_sd + spec.idio_sd * spec.idio_sd));
    return spec.beta * source_sd * std::sqrt(1.0 / (correlation * correlation) - 1.0);
}

SynthWorld generate(const SynthSpec& spec)
{
    spec.validate();
    SynthWorld w;
    w.spec = spec;

    // Firms and calendars.
    std::map<Market, std::vector<FirmIndex>> members;
    for (const auto& ms : spec.markets) {
        for (std::size_t i = 0; i < ms.firms; ++i) {
            members[ms.market].push_back(static_cast<FirmIndex>(w.firms.size()));
            w.firms.push_back(Firm{fmt::format("{}{:04d}", to_string(ms.market), i + 1), ms.market,
                                   fmt::format("S{:02d}", static_cast<int>(i % static_cast<std::size_t>(spec.sectors_per_market))),
                                   true});
        }
        TradingCalendar cal;
        cal.market = ms.market;
        auto rng = stream(spec, kCalendar, static_cast<std::uint64_t>(ms.market));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int k = 0; k < spec.months; ++k) {
            auto days = month_weekdays(spec.start + k);
            days.resize(std::min<std::size_t>(days.size(), static_cast<std::size_t>(spec.days_per_month)));
            std::vector<Date> open;
            for (Date d : days)
                if (u(rng) >= ms.holiday_rate)
                    open.push_back(d);
            if (open.empty())
                open.push_back(days.front());
            cal.dates.insert(cal.dates.end(), open.begin(), open.end());
        }
        w.calendars.push_back(std::move(cal));
    }
    auto calendar_of = [&](Market m) -> const TradingCalendar& {
        for (const auto& c : w.calendars)
            if (c.market == m)
                return c;
        throw Error("synth: missing calendar");
    };
    const std::size_t n_firms = w.firms.size();

    // Daily log returns per firm on its market calendar.
    std::vector<std::vector<double>> ret(n_firms);
    std::vector<std::vector<double>> echo(n_firms);
    std::vector<double> idio_sd(n_firms, spec.idio_sd);
    if (spec.lead_source && spec.sigma) {
        const double sd = std::sqrt(linked_idio_variance(spec));
        for (FirmIndex f : members[*spec.lead_target])
            idio_sd[f] = sd;
    }
    for (const auto& ms : spec.markets) {
        const auto& cal = calendar_of(ms.market);
        const std::size_t n_days = cal.dates.size();
        std::normal_distribution<double> z(0.0, 1.0);
        auto mrng = stream(spec, kMarketShock, static_cast<std::uint64_t>(ms.market));
        std::vector<double> mkt(n_days);
        for (auto& x : mkt)
            x = spec.market_sd * z(mrng);
        std::vector<std::vector<double>> sec(static_cast<std::size_t>(spec.sectors_per_market), std::vector<double>(n_days));
        for (std::size_t s = 0; s < sec.size(); ++s) {
            auto srng = stream(spec, kSectorShock, static_cast<std::uint64_t>(ms.market), s);
            for (auto& x : sec[s])
                x = spec.sector_sd * z(srng);
        }
        const auto& ids = members[ms.market];
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const FirmIndex f = ids[i];
            auto rng = stream(spec, kIdio, f);
            const auto& sector = sec[i % sec.size()];
            ret[f].resize(n_days);
            echo[f].assign(n_days, 0.0);
            for (std::size_t d = 0; d < n_days; ++d)
                ret[f][d] = mkt[d] + sector[d] + idio_sd[f] * z(rng);
        }
    }

    // Monthly lead-lag plant.
    if (spec.lead_source) {
        const auto& src = members[*spec.lead_source];
        const auto& tgt = members[*spec.lead_target];
        auto rng = stream(spec, kLinks);
        const auto pick = sample_without_replacement(src.size(), tgt.size(), rng);
        const auto& scal = calendar_of(*spec.lead_source);
        const auto& tcal = calendar_of(*spec.lead_target);
        auto month_positions = [&](const TradingCalendar& cal) {
            std::vector<std::vector<std::size_t>> pos(static_cast<std::size_t>(spec.months));
            for (std::size_t d = 0; d < cal.dates.size(); ++d)
                pos[static_cast<std::size_t>(Month::of(cal.dates[d]) - spec.start)].push_back(d);
            return pos;
        };
        const auto spos = month_positions(scal);
        const auto tpos = month_positions(tcal);
        for (std::size_t k = 0; k < tgt.size(); ++k) {
            const FirmIndex t = tgt[k];
            const FirmIndex s = src[pick[k]];
            w.links.push_back(PlantedLink{t, s, spec.beta, spec.lag_months});
            for (int m = spec.lag_months; m < spec.months; ++m) {
                double lead = 0.0;
                for (std::size_t d : spos[static_cast<std::size_t>(m - spec.lag_months)])
                    lead += ret[s][d];
                const auto& days = tpos[static_cast<std::size_t>(m)];
                for (std::size_t d : days)
                    ret[t][d] += spec.beta * lead / static_cast<double>(days.size());
            }
        }
    }

    // Event plant.
    if (spec.event_sources > 0) {
        const Market em = *spec.event_market;
        const auto& ecal = calendar_of(em);
        std::vector<FirmIndex> foreign;
        for (FirmIndex f = 0; f < n_firms; ++f)
            if (w.firms[f].market != em)
                foreign.push_back(f);
        auto rng = stream(spec, kEvents);
        const auto src_pick = sample_without_replacement(members[em].size(), spec.event_sources, rng);
        const auto nb_pick = sample_without_replacement(foreign.size(), spec.event_sources * spec.event_neighbors, rng);
        // Echo count per (market, calendar position), for the expected return.
        std::map<std::pair<Market, std::size_t>, std::size_t> echoed;
        struct Pending {
            FirmIndex source;
            Date date;
            std::vector<std::pair<FirmIndex, std::size_t>> hits;
        };
        std::vector<Pending> pending;
        const std::size_t n_days = ecal.dates.size();
        for (std::size_t s = 0; s < spec.event_sources; ++s) {
            const FirmIndex source = members[em][src_pick[s]];
            std::vector<FirmIndex> nbs;
            for (std::size_t k = 0; k < spec.event_neighbors; ++k) {
                nbs.push_back(foreign[nb_pick[s * spec.event_neighbors + k]]);
                w.event_links.push_back(EventLink{source, nbs.back()});
            }
            // Jump days keep clear of the panel edges and of each other.
            std::vector<std::size_t> days;
            std::set<std::size_t> blocked;
            std::size_t guard = 0;
            while (days.size() < spec.jumps_per_source) {
                if (++guard > 100000)
                    throw Error("synth: could not place event days");
                const std::size_t d = 1 + uniform_below(rng, n_days - 6);
                if (blocked.count(d))
                    continue;
                days.push_back(d);
                for (std::size_t b = d >= 3 ? d - 3 : 0; b <= d + 3; ++b)
                    blocked.insert(b);
            }
            std::sort(days.begin(), days.end());
            for (std::size_t d : days) {
                ret[source][d] += spec.jump_size;
                Pending p{source, ecal.dates[d], {}};
                for (FirmIndex nb : nbs) {
                    const auto& ncal = calendar_of(w.firms[nb].market);
                    const std::size_t pos = ncal.first_after(ecal.dates[d]) + 1;
                    if (pos + 1 >= ncal.dates.size())
                        continue;
                    echo[nb][pos] += spec.echo;
                    ++echoed[{w.firms[nb].market, pos}];
                    p.hits.emplace_back(nb, pos);
                }
                pending.push_back(std::move(p));
            }
        }
        for (const auto& p : pending) {
            double sum = 0.0;
            for (const auto& [nb, pos] : p.hits) {
                const Market m = w.firms[nb].market;
                sum += std::expm1(spec.echo) * (1.0 - static_cast<double>(echoed[{m, pos}]) /
                                              static_cast<double>(members[m].size()));
            }
            const double expected = p.hits.empty() ? 0.0 : sum / static_cast<double>(p.hits.size());
            w.events.push_back(PlantedEvent{p.source, p.date, spec.jump_size, expected});
        }
        std::sort(w.events.begin(), w.events.end(), [](const PlantedEvent& a, const PlantedEvent& b) {
            return a.date != b.date ? a.date < b.date : a.source < b.source;
        });
    }

    // Prices. 30% of each day's move happens overnight; echoes land intraday.
    for (FirmIndex f = 0; f < n_firms; ++f) {
        const auto& cal = calendar_of(w.firms[f].market);
        auto rng = stream(spec, kLevels, f);
        std::normal_distribution<double> z(0.0, 1.0);
        double close = 20.0 * std::exp(0.5 * z(rng));
        const double shares = std::round(1e8 * std::exp(0.8 * z(rng)));
        for (std::size_t d = 0; d < cal.dates.size(); ++d) {
            const double open = close * std::exp(0.3 * ret[f][d]);
            close = open * std::exp(0.7 * ret[f][d] + echo[f][d]);
            PriceRow row;
            row.firm_id = w.firms[f].id;
            row.date = cal.dates[d];
            row.open = open;
            row.adj_close = close;
            row.high = std::max(open, close) * std::exp(0.002 * std::abs(z(rng)));
            row.low = std::min(open, close) * std::exp(-0.002 * std::abs(z(rng)));
            row.volume = std::round(1e5 * std::exp(0.3 * z(rng)));
            row.shares_outstanding = shares;
            w.prices.push_back(std::move(row));
        }
    }

    // Embeddings.
    const auto p = static_cast<Eigen::Index>(spec.embed_dim);
    std::vector<Eigen::VectorXd> latent_seed(n_firms);
    for (std::size_t c = 0; c < spec.categories; ++c) {
        std::normal_distribution<double> z(0.0, 1.0);
        auto srng = stream(spec, kEmbedStyle, c);
        Eigen::VectorXd offset(p);
        for (auto& x : offset)
            x = 2.0 * z(srng);
        Eigen::MatrixXd style(p, static_cast<Eigen::Index>(spec.style_rank));
        for (Eigen::Index i = 0; i < style.size(); ++i)
            style.data()[i] = z(srng) / std::sqrt(static_cast<double>(p));
        std::vector<Eigen::VectorXd> latent(n_firms);
        for (FirmIndex f = 0; f < n_firms; ++f) {
            auto lrng = stream(spec, kEmbedLatent, c, f);
            latent[f].resize(p);
            for (auto& x : latent[f])
                x = spec.latent_sd * z(lrng);
        }
        auto inherit = [&](FirmIndex to, FirmIndex from) {
            auto jrng = stream(spec, kEmbedLatent, c + 1000, to);
            for (Eigen::Index i = 0; i < p; ++i)
                latent[to](i) = latent[from](i) + spec.partner_noise * z(jrng);
        };
        for (const auto& l : w.links)
            inherit(l.target, l.source);
        for (const auto& l : w.event_links)
            inherit(l.neighbor, l.source);

        EmbeddingSet set;
        set.category = std::string(kSchemaCategories[c]);
        set.vectors.resize(static_cast<Eigen::Index>(n_firms), p);
        for (FirmIndex f = 0; f < n_firms; ++f) {
            auto nrng = stream(spec, kEmbedNoise, c, f);
            Eigen::VectorXd coef(static_cast<Eigen::Index>(spec.style_rank));
            for (auto& x : coef)
                x = spec.style_sd * std::sqrt(static_cast<double>(p)) * z(nrng);
            Eigen::VectorXd v = offset + style * coef + latent[f];
            for (Eigen::Index i = 0; i < p; ++i)
                v(i) += spec.embed_noise * z(nrng);
            set.firm_ids.push_back(w.firms[f].id);
            set.vectors.row(static_cast<Eigen::Index>(f)) = v.transpose();
        }
        w.embeddings.push_back(std::move(set));
    }
    return w;
}

std::shared_ptr<const Universe> SynthWorld::universe() const
{
    return std::make_shared<const Universe>(firms);
}

PricePanel SynthWorld::panel() const
{
    return PricePanel(universe(), prices, calendars);
}

double planted_pair_correlation(const PricePanel& prices, const std::vector<PlantedLink>& links)
{
    double total = 0.0;
    std::size_t used = 0;
    for (const auto& l : links) {
        std::vector<double> x, y;
        for (Month m = prices.first_month() + l.lag_months; m <= prices.last_month(); m = m + 1) {
            const auto rt = prices.monthly_return(l.target, m);
            const auto rs = prices.monthly_return(l.source, m - l.lag_months);
            if (rt && rs) {
                x.push_back(*rs);
                y.push_back(*rt);
            }
        }
        if (x.size() < 3)
            continue;
        const double n = static_cast<double>(x.size());
        const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
        const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
        double sxx = 0, syy = 0, sxy = 0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            sxx += (x[k] - mx) * (x[k] - mx);
            syy += (y[k] - my) * (y[k] - my);
            sxy += (x[k] - mx) * (y[k] - my);
        }
        if (sxx > 0 && syy > 0) {
            total += sxy / std::sqrt(sxx * syy);
            ++used;
        }
    }
    return used ? total / static_cast<double>(used) : kMissing;
}

void write_world(const SynthWorld& w, const std::filesystem::path& dir)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir / "embeddings");
    fs::create_directories(dir / "truth");

    std::string out = "firm_id,market,sector,listed\n";
    for (const auto& f : w.firms)
        out += fmt::format("{},{},{},{}\n", f.id, to_string(f.market), f.sector, f.listed ? 1 : 0);
    csv::write_atomic(dir / "firms.csv", out);

    out = "market,date\n";
    for (const auto& cal : w.calendars)
        for (Date d : cal.dates)
            out += fmt::format("{},{}\n", to_string(cal.market), format_date(d));
    csv::write_atomic(dir / "calendar.csv", out);

    out = "firm_id,date,open,high,low,adj_close,volume,shares_outstanding\n";
    out.reserve(w.prices.size() * 110);
    for (const auto& r : w.prices)
        out += fmt::format("{},{},{},{},{},{},{},{}\n", r.firm_id, format_date(r.date), r.open, r.high, r.low,
                           r.adj_close, r.volume, r.shares_outstanding);
    csv::write_atomic(dir / "prices.csv", out);

    for (const auto& set : w.embeddings)
        save_embeddings(set, dir / "embeddings" / (set.category + ".csv"));

    out = "target_id,source_id,beta,lag_months\n";
    for (const auto& l : w.links)
        out += fmt::format("{},{},{},{}\n", w.firms[l.target].id, w.firms[l.source].id, l.beta, l.lag_months);
    csv::write_atomic(dir / "truth" / "links.csv", out);

    out = "source_id,neighbor_id\n";
    for (const auto& l : w.event_links)
        out += fmt::format("{},{}\n", w.firms[l.source].id, w.firms[l.neighbor].id);
    csv::write_atomic(dir / "truth" / "event_links.csv", out);

    out = "source_id,date,jump,expected_basket_return\n";
    for (const auto& e : w.events)
        out += fmt::format("{},{},{},{}\n", w.firms[e.source].id, format_date(e.date), e.jump, e.expected_basket_return);
    csv::write_atomic(dir / "truth" / "planted_events.csv", out);
}

std::vector<TruthLink> load_truth_links(const std::filesystem::path& links_csv)
{
    const auto t = csv::read(links_csv);
    const auto ct = t.column("target_id");
    const auto cs = t.column("source_id");
    std::vector<TruthLink> out;
    for (const auto& row : t.rows)
        out.push_back(TruthLink{row[ct], row[cs]});
    return out;
}

std::optional<double> recovery_score(const SimilarityGraph& graph, const Universe& universe,
                                     const std::vector<TruthLink>& links, std::size_t k)
{
    std::map<FirmIndex, std::size_t> target_row, source_col;
    for (std::size_t t = 0; t < graph.targets.size(); ++t)
        target_row[graph.targets[t]] = t;
    for (std::size_t s = 0; s < graph.sources.size(); ++s)
        source_col[graph.sources[s]] = s;
    std::size_t counted = 0, hits = 0;
    for (const auto& l : links) {
        const auto t = universe.find(l.target_id);
        const auto s = universe.find(l.source_id);
        if (!t || !s || !target_row.count(*t) || !source_col.count(*s))
            continue;
        const std::size_t row = target_row[*t];
        const double own = graph.score(row, source_col[*s]);
        ++counted;
        if (std::isnan(own))
            continue;
        // Sources ranked strictly ahead of the planted partner.
        std::size_t ahead = 0;
        for (std::size_t c = 0; c < graph.sources.size(); ++c) {
            const double x = graph.score(row, c);
            if (std::isnan(x) || c == source_col[*s])
                continue;
            if (x > own || (x == own && graph.sources[c] < *s))
                ++ahead;
        }
        if (ahead < k)
            ++hits;
    }
    if (counted == 0)
        return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(counted);
}

}  // namespace xmf
