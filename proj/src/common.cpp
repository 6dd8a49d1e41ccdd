#include "xmf/common.hpp"

#include <charconv>

#include <fmt/core.h>

namespace xmf {

std::string_view to_string(Market m)
{
    switch (m) {
    case Market::US: return "US";
    case Market::JP: return "JP";
    case Market::TW: return "TW";
    case Market::KR: return "KR";
    case Market::HK: return "HK";
    }
    return "??";
}

std::optional<Market> parse_market(std::string_view code)
{
    for (Market m : kAllMarkets)
        if (to_string(m) == code)
            return m;
    return std::nullopt;
}

Market market_from_string(std::string_view code)
{
    auto m = parse_market(code);
    if (!m)
        throw Error(fmt::format("unknown market code '{}'", code));
    return *m;
}

namespace {

int parse_int(std::string_view text, std::string_view whole)
{
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw Error(fmt::format("malformed date '{}'", whole));
    return value;
}

}  // namespace

Date parse_date(std::string_view text)
{
    if (text.size() != 10 || text[4] != '-' || text[7] != '-')
        throw Error(fmt::format("malformed date '{}' (expected YYYY-MM-DD)", text));
    const int y = parse_int(text.substr(0, 4), text);
    const int m = parse_int(text.substr(5, 2), text);
    const int d = parse_int(text.substr(8, 2), text);
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok())
        throw Error(fmt::format("invalid calendar date '{}'", text));
    return Date{ymd};
}

std::string format_date(Date d)
{
    const std::chrono::year_month_day ymd{d};
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                       static_cast<unsigned>(ymd.day()));
}

Month Month::of(Date d)
{
    const std::chrono::year_month_day ymd{d};
    return from_ym(static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()));
}

int Month::year() const
{
    return index >= 0 ? index / 12 : (index - 11) / 12;
}

unsigned Month::month() const
{
    return static_cast<unsigned>(index - year() * 12 + 1);
}

Date Month::first_day() const
{
    return Date{std::chrono::year{year()} / std::chrono::month{month()} / std::chrono::day{1}};
}

Month parse_month(std::string_view text)
{
    if (text.size() != 7 || text[4] != '-')
        throw Error(fmt::format("malformed month '{}' (expected YYYY-MM)", text));
    const int y = parse_int(text.substr(0, 4), text);
    const int m = parse_int(text.substr(5, 2), text);
    if (m < 1 || m > 12)
        throw Error(fmt::format("malformed month '{}'", text));
    return Month::from_ym(y, static_cast<unsigned>(m));
}

std::string format_month(Month m)
{
    return fmt::format("{:04d}-{:02d}", m.year(), m.month());
}

}  // namespace xmf
