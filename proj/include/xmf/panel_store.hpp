#pragma once

#include "xmf/common.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace xmf {

struct Firm {
    std::string id;
    Market market = Market::US;
    std::string sector;
    bool listed = true;
};

/// The validated firm table. Firm indices are positions in load order.
class Universe {
public:
    Universe() = default;
    /// Throws on duplicate firm ids.
    explicit Universe(std::vector<Firm> firms);

    /// Reads firms.csv (firm_id,market,sector,listed).
    static Universe load(const std::filesystem::path& firms_csv);

    std::size_t size() const { return firms_.size(); }
    const Firm& firm(FirmIndex i) const { return firms_.at(i); }
    const std::vector<Firm>& firms() const { return firms_; }

    std::optional<FirmIndex> find(std::string_view id) const;
    /// Like find() but throws an Error naming the id.
    FirmIndex require(std::string_view id) const;

    /// Firm indices of one market in ascending index order.
    const std::vector<FirmIndex>& members(Market m) const { return by_market_[static_cast<std::size_t>(m)]; }
    std::array<std::size_t, 5> counts() const;

    /// Dense id of the firm's (market, sector) cell, and that cell's members.
    int sector_group(FirmIndex i) const { return sector_group_.at(i); }
    const std::vector<FirmIndex>& sector_members(int group) const { return groups_.at(static_cast<std::size_t>(group)); }
    std::size_t sector_group_count() const { return groups_.size(); }

private:
    std::vector<Firm> firms_;
    std::unordered_map<std::string, FirmIndex> index_;
    std::array<std::vector<FirmIndex>, 5> by_market_;
    std::vector<int> sector_group_;
    std::vector<std::vector<FirmIndex>> groups_;
};

struct TradingCalendar {
    Market market = Market::US;
    std::vector<Date> dates;

    std::optional<std::size_t> index_of(Date d) const;
    /// Index of the first trading date strictly after `d`; equals dates.size() if none.
    std::size_t first_after(Date d) const;
};

struct PriceRow {
    std::string firm_id;
    Date date;
    double open = 0, high = 0, low = 0, adj_close = 0, volume = 0, shares_outstanding = 0;
};

struct Bar {
    Date date;
    double open = 0, high = 0, low = 0, adj_close = 0, volume = 0, shares_outstanding = 0;
};

enum class DailyReturnKind { close_to_close, open_open_t2 };

struct SectorRelative {
    std::optional<double> value;
    /// The firm was the only member of its sector with valid data; value is 0.
    bool singleton_sector = false;
};

/// Daily price panel for the whole universe plus all return primitives.
/// Immutable after construction.
class PricePanel {
public:
    PricePanel(std::shared_ptr<const Universe> universe, std::vector<PriceRow> rows,
               std::vector<TradingCalendar> calendars = {});

    /// Reads prices.csv and, when given, calendar.csv (market,date).
    static PricePanel load(std::shared_ptr<const Universe> universe, const std::filesystem::path& prices_csv,
                           const std::optional<std::filesystem::path>& calendar_csv = std::nullopt);

    const Universe& universe() const { return *universe_; }
    std::shared_ptr<const Universe> universe_ptr() const { return universe_; }
    const TradingCalendar& calendar(Market m) const { return calendars_[static_cast<std::size_t>(m)]; }
    std::span<const Bar> bars(FirmIndex f) const { return bars_.at(f); }
    /// Rows rejected for non-positive open or close.
    std::size_t dropped_rows() const { return dropped_rows_; }

    Month first_month() const { return first_month_; }
    Month last_month() const { return last_month_; }

    /// Compounded daily close-to-close return over the month's trading days.
    std::optional<double> monthly_return(FirmIndex f, Month m) const;
    /// Compounded return over months end-L+1..end; needs >= ceil(L/2) months with data.
    std::optional<double> cumulative_return(FirmIndex f, Month end, int lookback) const;
    SectorRelative sector_relative_return(FirmIndex f, Month end, int lookback) const;

    /// Sector-relative L-month returns for every member of `market` (NaN when
    /// missing), parallel to universe().members(market).
    std::vector<double> sector_relative_cross_section(Market market, Month end, int lookback,
                                                      std::vector<bool>* singleton = nullptr) const;
    /// Equal-weighted mean L-month return of each member's own sector, parallel
    /// to universe().members(market).
    std::vector<double> sector_mean_cross_section(Market market, Month end, int lookback) const;

    std::optional<double> market_relative_daily_return(FirmIndex f, Date d, DailyReturnKind kind) const;
    /// Buy and sell dates for the t+2 rule: the 2nd and 3rd trading dates of the
    /// firm's market strictly after calendar date `event_date`.
    std::optional<std::pair<Date, Date>> execution_dates(FirmIndex f, Date event_date) const;

    /// Close-to-close return on calendar position `pos` of the firm's market;
    /// needs bars on both pos-1 and pos.
    std::optional<double> daily_close_return(FirmIndex f, std::size_t pos) const;
    std::optional<double> log_market_cap(FirmIndex f, Month m) const;

    /// Copy with every bar dated on or after `cutoff` multiplied by random noise.
    PricePanel with_perturbed_prices(Date cutoff, std::uint64_t seed) const;

private:
    PricePanel() = default;
    void rebuild_derived();
    std::size_t month_slot(Month m) const { return static_cast<std::size_t>(m - first_month_); }
    bool in_span(Month m) const { return m >= first_month_ && m <= last_month_; }
    const Bar* bar_at(FirmIndex f, std::size_t pos) const;

    std::shared_ptr<const Universe> universe_;
    std::array<TradingCalendar, 5> calendars_;
    std::vector<std::vector<Bar>> bars_;
    std::size_t dropped_rows_ = 0;

    Month first_month_{};
    Month last_month_{};
    // Per firm: calendar position -> bar index or -1.
    std::vector<std::vector<std::int32_t>> cal_pos_;
    // Per firm: month slot -> compounded return or NaN.
    std::vector<std::vector<double>> monthly_;
    // Per market, per calendar position: equal-weight mean over listed firms and count.
    std::array<std::vector<double>, 5> cc_mean_, oo_mean_;
    std::array<std::vector<std::uint32_t>, 5> cc_count_, oo_count_;
};

}  // namespace xmf
