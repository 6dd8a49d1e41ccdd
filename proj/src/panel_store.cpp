#include "xmf/panel_store.hpp"

#include "xmf/csv.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <fmt/core.h>

namespace xmf {

// ---------------------------------------------------------------------------
// Universe

Universe::Universe(std::vector<Firm> firms) : firms_(std::move(firms))
{
    std::map<std::pair<Market, std::string>, int> cells;
    sector_group_.reserve(firms_.size());
    for (std::size_t i = 0; i < firms_.size(); ++i) {
        const Firm& f = firms_[i];
        if (f.id.empty())
            throw Error(fmt::format("firm at position {} has an empty firm_id", i));
        if (!index_.emplace(f.id, static_cast<FirmIndex>(i)).second)
            throw Error(fmt::format("duplicate firm_id '{}'", f.id));
        by_market_[static_cast<std::size_t>(f.market)].push_back(static_cast<FirmIndex>(i));
        auto [it, inserted] = cells.emplace(std::make_pair(f.market, f.sector), static_cast<int>(groups_.size()));
        if (inserted)
            groups_.emplace_back();
        groups_[static_cast<std::size_t>(it->second)].push_back(static_cast<FirmIndex>(i));
        sector_group_.push_back(it->second);
    }
}

Universe Universe::load(const std::filesystem::path& firms_csv)
{
    const auto t = csv::read(firms_csv);
    const auto c_id = t.column("firm_id");
    const auto c_market = t.column("market");
    const auto c_sector = t.column("sector");
    const auto c_listed = t.column("listed");
    std::vector<Firm> firms;
    firms.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        auto market = parse_market(row[c_market]);
        if (!market)
            throw Error(fmt::format("{}:{}: unknown market code '{}' for firm '{}'", firms_csv.string(),
                                    t.line_numbers[r], row[c_market], row[c_id]));
        bool listed = true;
        try {
            listed = csv::to_bool(row[c_listed]);
        } catch (const Error& e) {
            throw Error(fmt::format("{}:{}: {}", firms_csv.string(), t.line_numbers[r], e.what()));
        }
        firms.push_back(Firm{row[c_id], *market, row[c_sector], listed});
    }
    return Universe(std::move(firms));
}

std::optional<FirmIndex> Universe::find(std::string_view id) const
{
    auto it = index_.find(std::string(id));
    if (it == index_.end())
        return std::nullopt;
    return it->second;
}

FirmIndex Universe::require(std::string_view id) const
{
    auto f = find(id);
    if (!f)
        throw Error(fmt::format("unknown firm_id '{}'", id));
    return *f;
}

std::array<std::size_t, 5> Universe::counts() const
{
    std::array<std::size_t, 5> out{};
    for (std::size_t m = 0; m < 5; ++m)
        out[m] = by_market_[m].size();
    return out;
}

// ---------------------------------------------------------------------------
// TradingCalendar

std::optional<std::size_t> TradingCalendar::index_of(Date d) const
{
    auto it = std::lower_bound(dates.begin(), dates.end(), d);
    if (it == dates.end() || *it != d)
        return std::nullopt;
    return static_cast<std::size_t>(it - dates.begin());
}

std::size_t TradingCalendar::first_after(Date d) const
{
    return static_cast<std::size_t>(std::upper_bound(dates.begin(), dates.end(), d) - dates.begin());
}

// ---------------------------------------------------------------------------
// PricePanel

PricePanel::PricePanel(std::shared_ptr<const Universe> universe, std::vector<PriceRow> rows,
                       std::vector<TradingCalendar> calendars)
    : universe_(std::move(universe))
{
    if (!universe_)
        throw Error("price panel needs a universe");
    bars_.assign(universe_->size(), {});
    for (auto& row : rows) {
        const auto f = universe_->find(row.firm_id);
        if (!f)
            throw Error(fmt::format("price row for unknown firm_id '{}' on {}", row.firm_id, format_date(row.date)));
        if (!(row.open > 0.0) || !(row.adj_close > 0.0)) {
            ++dropped_rows_;
            continue;
        }
        bars_[*f].push_back(Bar{row.date, row.open, row.high, row.low, row.adj_close, row.volume,
                                row.shares_outstanding});
    }
    for (std::size_t f = 0; f < bars_.size(); ++f) {
        auto& b = bars_[f];
        std::sort(b.begin(), b.end(), [](const Bar& x, const Bar& y) { return x.date < y.date; });
        for (std::size_t k = 1; k < b.size(); ++k)
            if (b[k].date == b[k - 1].date)
                throw Error(fmt::format("duplicate price row for firm '{}' on {}", universe_->firm(static_cast<FirmIndex>(f)).id,
                                        format_date(b[k].date)));
    }

    for (std::size_t m = 0; m < 5; ++m)
        calendars_[m].market = kAllMarkets[m];
    if (calendars.empty()) {
        for (std::size_t f = 0; f < bars_.size(); ++f) {
            auto& cal = calendars_[static_cast<std::size_t>(universe_->firm(static_cast<FirmIndex>(f)).market)].dates;
            for (const auto& bar : bars_[f])
                cal.push_back(bar.date);
        }
        for (auto& cal : calendars_) {
            std::sort(cal.dates.begin(), cal.dates.end());
            cal.dates.erase(std::unique(cal.dates.begin(), cal.dates.end()), cal.dates.end());
        }
    } else {
        for (auto& cal : calendars) {
            for (std::size_t k = 1; k < cal.dates.size(); ++k)
                if (!(cal.dates[k - 1] < cal.dates[k]))
                    throw Error(fmt::format("calendar for {} is not strictly increasing at {}", to_string(cal.market),
                                            format_date(cal.dates[k])));
            calendars_[static_cast<std::size_t>(cal.market)] = std::move(cal);
        }
        for (std::size_t f = 0; f < bars_.size(); ++f) {
            const auto& firm = universe_->firm(static_cast<FirmIndex>(f));
            const auto& cal = calendars_[static_cast<std::size_t>(firm.market)];
            for (const auto& bar : bars_[f])
                if (!cal.index_of(bar.date))
                    throw Error(fmt::format("price date {} for firm '{}' is not in the {} trading calendar",
                                            format_date(bar.date), firm.id, to_string(firm.market)));
        }
    }
    rebuild_derived();
}

PricePanel PricePanel::load(std::shared_ptr<const Universe> universe, const std::filesystem::path& prices_csv,
                            const std::optional<std::filesystem::path>& calendar_csv)
{
    const auto t = csv::read(prices_csv);
    const auto c_id = t.column("firm_id");
    const auto c_date = t.column("date");
    const auto c_open = t.column("open");
    const auto c_high = t.column("high");
    const auto c_low = t.column("low");
    const auto c_close = t.column("adj_close");
    const auto c_vol = t.column("volume");
    const auto c_shares = t.column("shares_outstanding");
    std::vector<PriceRow> rows;
    rows.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        PriceRow p;
        p.firm_id = row[c_id];
        try {
            p.date = parse_date(row[c_date]);
        } catch (const Error& e) {
            throw Error(fmt::format("{}:{}: {}", prices_csv.string(), t.line_numbers[r], e.what()));
        }
        p.open = csv::to_double(row[c_open], t, r);
        p.high = csv::to_double(row[c_high], t, r);
        p.low = csv::to_double(row[c_low], t, r);
        p.adj_close = csv::to_double(row[c_close], t, r);
        p.volume = csv::to_double(row[c_vol], t, r);
        p.shares_outstanding = csv::to_double(row[c_shares], t, r);
        rows.push_back(std::move(p));
    }

    std::vector<TradingCalendar> calendars;
    if (calendar_csv) {
        const auto ct = csv::read(*calendar_csv);
        const auto c_market = ct.column("market");
        const auto c_cdate = ct.column("date");
        std::array<TradingCalendar, 5> by_market;
        for (std::size_t m = 0; m < 5; ++m)
            by_market[m].market = kAllMarkets[m];
        for (std::size_t r = 0; r < ct.rows.size(); ++r) {
            auto m = parse_market(ct.rows[r][c_market]);
            if (!m)
                throw Error(fmt::format("{}:{}: unknown market code '{}'", calendar_csv->string(), ct.line_numbers[r],
                                        ct.rows[r][c_market]));
            by_market[static_cast<std::size_t>(*m)].dates.push_back(parse_date(ct.rows[r][c_cdate]));
        }
        calendars.assign(by_market.begin(), by_market.end());
    }
    return PricePanel(std::move(universe), std::move(rows), std::move(calendars));
}

void PricePanel::rebuild_derived()
{
    const std::size_t n = universe_->size();

    bool any = false;
    for (const auto& b : bars_) {
        if (b.empty())
            continue;
        const Month lo = Month::of(b.front().date);
        const Month hi = Month::of(b.back().date);
        if (!any) {
            first_month_ = lo;
            last_month_ = hi;
            any = true;
        } else {
            first_month_ = std::min(first_month_, lo);
            last_month_ = std::max(last_month_, hi);
        }
    }
    const std::size_t months = any ? static_cast<std::size_t>(last_month_ - first_month_ + 1) : 0;

    cal_pos_.assign(n, {});
    monthly_.assign(n, std::vector<double>(months, kMissing));
    for (std::size_t f = 0; f < n; ++f) {
        const auto& firm = universe_->firm(static_cast<FirmIndex>(f));
        const auto& cal = calendars_[static_cast<std::size_t>(firm.market)];
        auto& pos = cal_pos_[f];
        pos.assign(cal.dates.size(), -1);
        const auto& b = bars_[f];
        for (std::size_t k = 0; k < b.size(); ++k) {
            if (auto p = cal.index_of(b[k].date))
                pos[*p] = static_cast<std::int32_t>(k);
        }
        auto& mret = monthly_[f];
        for (std::size_t k = 1; k < b.size(); ++k) {
            const double growth = b[k].adj_close / b[k - 1].adj_close;
            double& slot = mret[month_slot(Month::of(b[k].date))];
            slot = std::isnan(slot) ? growth : slot * growth;
        }
        for (double& x : mret)
            if (!std::isnan(x))
                x -= 1.0;
    }

    for (std::size_t m = 0; m < 5; ++m) {
        const std::size_t days = calendars_[m].dates.size();
        cc_mean_[m].assign(days, kMissing);
        oo_mean_[m].assign(days, kMissing);
        cc_count_[m].assign(days, 0);
        oo_count_[m].assign(days, 0);
        for (std::size_t pos = 0; pos < days; ++pos) {
            double cc_sum = 0.0, oo_sum = 0.0;
            std::uint32_t cc_n = 0, oo_n = 0;
            for (FirmIndex f : universe_->members(kAllMarkets[m])) {
                if (!universe_->firm(f).listed)
                    continue;
                const Bar* today = bar_at(f, pos);
                if (!today)
                    continue;
                if (pos > 0) {
                    if (const Bar* prev = bar_at(f, pos - 1)) {
                        cc_sum += today->adj_close / prev->adj_close - 1.0;
                        ++cc_n;
                    }
                }
                if (pos + 1 < days) {
                    if (const Bar* next = bar_at(f, pos + 1)) {
                        oo_sum += next->open / today->open - 1.0;
                        ++oo_n;
                    }
                }
            }
            if (cc_n > 0)
                cc_mean_[m][pos] = cc_sum / cc_n;
            if (oo_n > 0)
                oo_mean_[m][pos] = oo_sum / oo_n;
            cc_count_[m][pos] = cc_n;
            oo_count_[m][pos] = oo_n;
        }
    }
}

const Bar* PricePanel::bar_at(FirmIndex f, std::size_t pos) const
{
    const auto& p = cal_pos_[f];
    if (pos >= p.size() || p[pos] < 0)
        return nullptr;
    return &bars_[f][static_cast<std::size_t>(p[pos])];
}

std::optional<double> PricePanel::monthly_return(FirmIndex f, Month m) const
{
    if (!in_span(m))
        return std::nullopt;
    return to_optional(monthly_.at(f)[month_slot(m)]);
}

std::optional<double> PricePanel::cumulative_return(FirmIndex f, Month end, int lookback) const
{
    if (lookback < 1)
        throw Error(fmt::format("lookback must be >= 1 month, got {}", lookback));
    double growth = 1.0;
    int covered = 0;
    for (Month m = end - (lookback - 1); m <= end; m = m + 1) {
        if (!in_span(m))
            continue;
        const double r = monthly_.at(f)[month_slot(m)];
        if (std::isnan(r))
            continue;
        growth *= 1.0 + r;
        ++covered;
    }
    if (covered < (lookback + 1) / 2 || covered == 0)
        return std::nullopt;
    return growth - 1.0;
}

SectorRelative PricePanel::sector_relative_return(FirmIndex f, Month end, int lookback) const
{
    const auto own = cumulative_return(f, end, lookback);
    if (!own)
        return {};
    double sum = 0.0;
    std::size_t count = 0;
    for (FirmIndex g : universe_->sector_members(universe_->sector_group(f))) {
        const auto r = g == f ? own : cumulative_return(g, end, lookback);
        if (r) {
            sum += *r;
            ++count;
        }
    }
    if (count < 2)
        return SectorRelative{0.0, true};
    return SectorRelative{*own - sum / static_cast<double>(count), false};
}

std::vector<double> PricePanel::sector_relative_cross_section(Market market, Month end, int lookback,
                                                              std::vector<bool>* singleton) const
{
    const auto& members = universe_->members(market);
    std::vector<double> cum(members.size(), kMissing);
    std::unordered_map<int, std::pair<double, std::size_t>> sector_sum;
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (auto r = cumulative_return(members[k], end, lookback)) {
            cum[k] = *r;
            auto& acc = sector_sum[universe_->sector_group(members[k])];
            acc.first += *r;
            ++acc.second;
        }
    }
    std::vector<double> out(members.size(), kMissing);
    if (singleton)
        singleton->assign(members.size(), false);
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (std::isnan(cum[k]))
            continue;
        const auto& acc = sector_sum[universe_->sector_group(members[k])];
        if (acc.second < 2) {
            out[k] = 0.0;
            if (singleton)
                (*singleton)[k] = true;
        } else {
            out[k] = cum[k] - acc.first / static_cast<double>(acc.second);
        }
    }
    return out;
}

std::vector<double> PricePanel::sector_mean_cross_section(Market market, Month end, int lookback) const
{
    const auto& members = universe_->members(market);
    std::unordered_map<int, std::pair<double, std::size_t>> sector_sum;
    for (FirmIndex f : members) {
        if (auto r = cumulative_return(f, end, lookback)) {
            auto& acc = sector_sum[universe_->sector_group(f)];
            acc.first += *r;
            ++acc.second;
        }
    }
    std::vector<double> out(members.size(), kMissing);
    for (std::size_t k = 0; k < members.size(); ++k) {
        auto it = sector_sum.find(universe_->sector_group(members[k]));
        if (it != sector_sum.end() && it->second.second > 0)
            out[k] = it->second.first / static_cast<double>(it->second.second);
    }
    return out;
}

std::optional<double> PricePanel::daily_close_return(FirmIndex f, std::size_t pos) const
{
    if (pos == 0)
        return std::nullopt;
    const Bar* today = bar_at(f, pos);
    const Bar* prev = bar_at(f, pos - 1);
    if (!today || !prev)
        return std::nullopt;
    return today->adj_close / prev->adj_close - 1.0;
}

std::optional<std::pair<Date, Date>> PricePanel::execution_dates(FirmIndex f, Date event_date) const
{
    const auto& cal = calendars_[static_cast<std::size_t>(universe_->firm(f).market)];
    const std::size_t d1 = cal.first_after(event_date);
    if (d1 + 2 >= cal.dates.size())
        return std::nullopt;
    return std::make_pair(cal.dates[d1 + 1], cal.dates[d1 + 2]);
}

std::optional<double> PricePanel::market_relative_daily_return(FirmIndex f, Date d, DailyReturnKind kind) const
{
    const Firm& firm = universe_->firm(f);
    const auto m = static_cast<std::size_t>(firm.market);
    const auto& cal = calendars_[m];
    std::size_t pos = 0;
    double own = 0.0;
    double mean = 0.0;
    std::uint32_t count = 0;
    if (kind == DailyReturnKind::close_to_close) {
        auto p = cal.index_of(d);
        if (!p)
            return std::nullopt;
        pos = *p;
        auto r = daily_close_return(f, pos);
        if (!r)
            return std::nullopt;
        own = *r;
        mean = cc_mean_[m][pos];
        count = cc_count_[m][pos];
    } else {
        pos = cal.first_after(d) + 1;
        if (pos + 1 >= cal.dates.size())
            return std::nullopt;
        const Bar* buy = bar_at(f, pos);
        const Bar* sell = bar_at(f, pos + 1);
        if (!buy || !sell)
            return std::nullopt;
        own = sell->open / buy->open - 1.0;
        mean = oo_mean_[m][pos];
        count = oo_count_[m][pos];
    }
    const std::uint32_t peers = firm.listed ? count - 1 : count;
    if (peers < 2 || std::isnan(mean))
        return std::nullopt;
    return own - mean;
}

std::optional<double> PricePanel::log_market_cap(FirmIndex f, Month m) const
{
    const auto& b = bars_.at(f);
    const Date next_first = (m + 1).first_day();
    auto it = std::lower_bound(b.begin(), b.end(), next_first, [](const Bar& bar, Date d) { return bar.date < d; });
    if (it == b.begin())
        return std::nullopt;
    --it;
    if (Month::of(it->date) != m)
        return std::nullopt;
    const double cap = it->adj_close * it->shares_outstanding;
    if (!(cap > 0.0) || !std::isfinite(cap))
        return std::nullopt;
    return std::log(cap);
}

PricePanel PricePanel::with_perturbed_prices(Date cutoff, std::uint64_t seed) const
{
    PricePanel out;
    out.universe_ = universe_;
    out.calendars_ = calendars_;
    out.bars_ = bars_;
    out.dropped_rows_ = dropped_rows_;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (auto& b : out.bars_) {
        for (auto& bar : b) {
            if (bar.date < cutoff)
                continue;
            bar.open *= std::exp(noise(rng));
            bar.high *= std::exp(noise(rng));
            bar.low *= std::exp(noise(rng));
            bar.adj_close *= std::exp(noise(rng));
            bar.shares_outstanding *= std::exp(noise(rng));
        }
    }
    out.rebuild_derived();
    return out;
}

}  // namespace xmf
