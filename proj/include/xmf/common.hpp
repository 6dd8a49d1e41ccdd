#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace xmf {

/// Base error type for every hard failure raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Market : std::uint8_t { US, JP, TW, KR, HK };

inline constexpr std::array<Market, 5> kAllMarkets{Market::US, Market::JP, Market::TW,
                                                   Market::KR, Market::HK};

std::string_view to_string(Market m);
std::optional<Market> parse_market(std::string_view code);
/// Throwing variant for config values and CLI flags.
Market market_from_string(std::string_view code);

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD; throws Error on malformed or impossible dates.
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// Calendar month as a dense integer (year * 12 + month - 1).
struct Month {
    int index = 0;

    static Month of(Date d);
    static Month from_ym(int year, unsigned month) { return Month{year * 12 + static_cast<int>(month) - 1}; }

    int year() const;
    unsigned month() const;
    Date first_day() const;
    Month operator+(int n) const { return Month{index + n}; }
    Month operator-(int n) const { return Month{index - n}; }
    int operator-(Month other) const { return index - other.index; }
    auto operator<=>(const Month&) const = default;
};

/// Parses YYYY-MM.
Month parse_month(std::string_view text);
std::string format_month(Month m);

using FirmIndex = std::uint32_t;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double x) { return std::isnan(x); }
inline std::optional<double> to_optional(double x)
{
    if (std::isnan(x))
        return std::nullopt;
    return x;
}

}  // namespace xmf
