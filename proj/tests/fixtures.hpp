#pragma once

#include "xmf/panel_store.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace fixture {

using namespace xmf;

inline Date d(const char* s) { return parse_date(s); }

inline std::shared_ptr<const Universe> universe(std::vector<Firm> firms)
{
    return std::make_shared<const Universe>(std::move(firms));
}

/// Weekdays from `first` onward, `n` of them.
inline std::vector<Date> weekdays(Date first, std::size_t n)
{
    std::vector<Date> out;
    for (Date x = first; out.size() < n; x += std::chrono::days{1}) {
        const std::chrono::weekday wd{x};
        if (wd != std::chrono::Saturday && wd != std::chrono::Sunday)
            out.push_back(x);
    }
    return out;
}

/// One bar per date with open = close = `closes[k]` unless opens are given.
inline void add_series(std::vector<PriceRow>& rows, const std::string& id, const std::vector<Date>& dates,
                       const std::vector<double>& closes, const std::vector<double>& opens = {},
                       double shares = 1e6)
{
    for (std::size_t k = 0; k < dates.size(); ++k) {
        PriceRow r;
        r.firm_id = id;
        r.date = dates[k];
        r.adj_close = closes[k];
        r.open = opens.empty() ? closes[k] : opens[k];
        r.high = std::max(r.open, r.adj_close);
        r.low = std::min(r.open, r.adj_close);
        r.volume = 1000;
        r.shares_outstanding = shares;
        rows.push_back(r);
    }
}

/// Zero-padded id so string order matches numeric order.
inline std::string fmt_id(std::size_t k)
{
    std::string s = std::to_string(k);
    return "F" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

/// Random-walk closes starting at 100.
inline std::vector<double> random_walk(std::size_t n, std::mt19937_64& rng, double sd = 0.02)
{
    std::normal_distribution<double> z(0.0, sd);
    std::vector<double> out;
    double p = 100.0;
    for (std::size_t k = 0; k < n; ++k) {
        p *= std::exp(z(rng));
        out.push_back(p);
    }
    return out;
}

}  // namespace fixture
