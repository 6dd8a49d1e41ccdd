#pragma once

#include "xmf/common.hpp"
#include "xmf/factor_engine.hpp"
#include "xmf/panel_store.hpp"

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace xmf {

/// Bucket sizes for n firms: floor(n/5) each, remainder handed out to
/// Q1, Q5, Q2, Q4, Q3 in that order.
std::array<std::size_t, 5> quintile_sizes(std::size_t n);

struct QuintileAssignment {
    /// Positions into the input, bucket 0 = Q1 (lowest factor).
    std::array<std::vector<std::size_t>, 5> buckets;
    bool degenerate = false;  // every value equal; order is firm id order
};

/// Ascending sort with ties broken by firm id. Needs >= 5 values.
QuintileAssignment quintile_sort(std::span<const std::string> ids, std::span<const double> values);

struct MonthlyBook {
    Month month{};
    std::vector<FirmIndex> long_leg;   // Q5
    std::vector<FirmIndex> short_leg;  // Q1
    double long_turnover = 1.0;
    double short_turnover = 1.0;
    bool degenerate = false;
};

/// One-way turnover between two equal-weight legs: the total weight bought.
/// An empty previous leg gives 1.
double leg_turnover(std::span<const FirmIndex> previous, std::span<const FirmIndex> current);

/// Sorts a factor cross-section into a Q5-Q1 book. Returns nullopt when
/// fewer than 5 firms carry a value.
std::optional<MonthlyBook> make_book(const FactorPanel& factor, const Universe& universe,
                                     const MonthlyBook* previous);

struct LsReturn {
    double gross = 0.0;
    double cost = 0.0;
    double net = 0.0;
};

/// mean(long) - mean(short) - cost_bp/1e4 * (long turnover + short turnover).
LsReturn ls_return(std::span<const double> long_returns, std::span<const double> short_returns,
                   double long_turnover, double short_turnover, double cost_bp);

/// Spearman correlation with mean ranks for ties; nullopt when fewer than 3
/// pairs or either side is constant.
std::optional<double> spearman_ic(std::span<const double> factor, std::span<const double> forward);

/// Annualised mean/sd of the IC series (NaN entries skipped, sd with n-1).
std::optional<double> icir(std::span<const double> ics);
std::optional<double> sharpe_ratio(std::span<const double> returns);
std::vector<double> wealth_curve(std::span<const double> returns);
/// min_t (V_t / max_{tau<=t} V_tau - 1), taken over the curve V_1..V_T.
double max_drawdown(std::span<const double> returns);
double annualized_return(std::span<const double> returns);
/// Arithmetic sum of monthly returns.
double cumulative_sum_return(std::span<const double> returns);

struct MonthRecord {
    Month month{};
    std::size_t n_firms = 0;
    double ic = kMissing;
    bool traded = false;
    double gross = kMissing;
    double cost = kMissing;
    double net = kMissing;
    double long_turnover = kMissing;
    double short_turnover = kMissing;
    std::size_t delisted_members = 0;
    bool degenerate = false;
};

struct BacktestMetrics {
    std::optional<double> ic_mean;
    std::optional<double> icir;
    std::optional<double> sharpe;
    std::optional<double> max_drawdown;
    std::optional<double> annual_return;
    std::optional<double> cumulative_return;
    std::size_t ic_months = 0;
    std::size_t traded_months = 0;
};

struct BacktestReport {
    double cost_bp = 2.0;
    std::vector<MonthRecord> months;
    std::vector<double> ls_returns;  // net, traded months only
    std::vector<double> wealth;      // compounded from ls_returns
    BacktestMetrics metrics;
};

/// Runs the monthly Q5-Q1 book over consecutive factor panels. Forward
/// returns are each firm's return in the factor's own month; a firm with no
/// prices that month is treated as delisted and earns 0.
BacktestReport run_backtest(std::span<const FactorPanel> factors, const PricePanel& prices, double cost_bp);

BacktestMetrics compute_metrics(std::span<const double> ics, std::span<const double> ls_returns);

struct TargetGain {
    Market target = Market::US;
    std::optional<Market> best_source;  // best non-domestic source
    std::optional<double> best_icir;
    std::optional<double> domestic_icir;
    std::optional<double> gain;  // best cross-market minus domestic
};

struct GeographyMatrix {
    std::vector<Market> markets;
    /// icir[s][t] for markets[s] -> markets[t]; nullopt for failed pairs.
    std::vector<std::vector<std::optional<double>>> icir;
    std::vector<std::vector<std::string>> errors;
    std::vector<TargetGain> gains;
};

/// Evaluates `pair_icir` for every ordered pair. A throwing pair leaves its
/// cell empty and the run continues.
GeographyMatrix geography_matrix(std::span<const Market> markets,
                                 const std::function<std::optional<double>(Market, Market)>& pair_icir,
                                 unsigned threads = 1);

}  // namespace xmf
