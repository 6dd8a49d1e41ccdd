#pragma once

#include "xmf/common.hpp"
#include "xmf/graph_builder.hpp"
#include "xmf/panel_store.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace xmf {

enum class FactorVariant { raw, neutralized, strict };
std::string_view to_string(FactorVariant v);
FactorVariant parse_factor_variant(std::string_view text);

/// One month's factor cross-section over the target market. Only firms with
/// a value are listed; `firms` is in ascending index order.
struct FactorPanel {
    Month month{};
    Market source = Market::US;
    Market target = Market::JP;
    int lookback = 12;
    PeerScheme scheme = PeerScheme::text_sigmoid;
    FactorVariant variant = FactorVariant::raw;
    std::vector<FirmIndex> firms;
    std::vector<double> values;
};

/// Peer momentum for month M: the alpha-weighted mean of source peers'
/// L-month sector-relative returns ending at M-1, normalised by the weight
/// mass of peers that have a return.
FactorPanel compute_factor(const PeerWeights& weights, const PricePanel& prices, Month month, int lookback);

struct NeutralizationReport {
    Month month{};
    std::vector<double> sector_means;  // factor mean removed per sector code
    double size_beta = 0.0;
    double residual_sd = 0.0;
    std::size_t n_used = 0;
    bool single_sector = false;
    bool degenerate = false;  // zero variance after demeaning; residual is all zero
};

struct Neutralized {
    std::vector<double> residuals;
    NeutralizationReport report;
};

/// Sector demeaning, standardisation, then removal of the standardised
/// log-cap exposure. The size regressor is demeaned within sector so the
/// residual has zero sector means and zero size covariance simultaneously.
/// `sectors` are dense codes 0..S-1. Needs >= 3 firms.
Neutralized neutralize(std::span<const double> factor, std::span<const int> sectors, std::span<const double> log_caps);

struct StrictNeutralized {
    std::vector<double> residuals;
    std::vector<std::string> dropped_columns;  // collinear regressors removed
    double winsor_low = 0.0;
    double winsor_high = 0.0;
};

/// Winsorise at the 1st/99th percentiles, standardise, then take the least
/// squares residual on sector dummies, standardised log cap, industry
/// momentum and own momentum.
StrictNeutralized strict_neutralize(std::span<const double> factor, std::span<const int> sectors,
                                    std::span<const double> log_caps, std::span<const double> industry_momentum,
                                    std::span<const double> own_momentum);

/// Linear-interpolated sample quantile (q in [0,1]).
double quantile(std::vector<double> values, double q);

/// Neutralises a raw panel with month-end (M-1) log caps. Firms lacking size
/// data are dropped. Months with fewer than 3 usable firms come back empty.
FactorPanel neutralize_panel(const FactorPanel& raw, const PricePanel& prices,
                             NeutralizationReport* report = nullptr);
/// Strict variant; momentum regressors are 12-month returns ending at M-1.
FactorPanel strict_neutralize_panel(const FactorPanel& raw, const PricePanel& prices,
                                    std::vector<std::string>* dropped = nullptr);

/// Raw factor followed by the requested neutralisation.
FactorPanel build_factor(const PeerWeights& weights, const PricePanel& prices, Month month, int lookback,
                         FactorVariant variant);

/// Recomputes a month's factor from a panel; used so the audit can rebuild
/// anything that depends on prices, including correlation weights.
using FactorBuilder = std::function<FactorPanel(const PricePanel&, Month)>;

struct Contamination {
    Month month{};
    FirmIndex firm = 0;
};

struct AuditVerdict {
    bool passed = true;
    std::size_t months_checked = 0;
    std::vector<Contamination> contaminated;
};

/// For each month M, perturbs every price dated in month M or later and
/// requires the rebuilt month-M factor to be bit-identical.
AuditVerdict lookahead_audit(const FactorBuilder& builder, const PricePanel& prices, std::span<const Month> months,
                             std::uint64_t seed, unsigned threads = 1);

}  // namespace xmf
