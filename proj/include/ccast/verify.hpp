#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "ccast/grid.hpp"

namespace ccast {

enum class Metric { TCC, RMSE, RPSS, BSS, COR };

const std::string& metric_name(Metric m);
Metric metric_from_name(const std::string& name);

/// Per-point verification map at one lead.
struct MetricMap {
    GridSpec grid;
    Metric metric = Metric::TCC;
    int lead_week = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;

    MetricMap() = default;
    MetricMap(GridSpec g, Metric m, int week);
};

/// N paired (prediction anomaly, observation anomaly) fields at a fixed lead,
/// indexed by initialization.
struct MatchedSample {
    std::vector<Field> pred;
    std::vector<Field> obs;

    std::size_t count() const { return pred.size(); }
    void validate(std::size_t min_n = 2) const;
};

/// Per-point category probabilities, point-major layout (point*k + category).
struct CategoryProbs {
    GridSpec grid;
    int k = 3;
    std::vector<double> probs;
    std::vector<std::uint8_t> mask;

    CategoryProbs() = default;
    CategoryProbs(GridSpec g, int categories);
    double at(std::size_t point, int category) const {
        return probs[point * static_cast<std::size_t>(k) + static_cast<std::size_t>(category)];
    }
};

/// Pointwise Pearson correlation of prediction vs observation across
/// initializations. Zero-variance points come back masked, not NaN.
MetricMap tcc(const MatchedSample& sample);

/// Pointwise root mean square error across initializations.
MetricMap rmse(const MatchedSample& sample);

/// Member-count probabilities against K-1 pointwise ordered threshold fields.
/// A member exactly on a boundary goes to the lower category.
CategoryProbs category_probs(const std::vector<Field>& members,
                             const std::vector<Field>& thresholds);

/// One-hot categorization of an observed field.
CategoryProbs observed_probs(const Field& obs, const std::vector<Field>& thresholds);

/// Uniform tercile reference (1/3 each) for K=3; (0.9, 0.1) for K=2.
CategoryProbs climatological_probs(const GridSpec& grid, int k);

/// Per-point ranked probability score, cumulative form without
/// normalization. Throws if a probability vector does not sum to 1.
std::vector<double> rps(const CategoryProbs& forecast, const CategoryProbs& observed);

/// 1 - <RPS_forecast>/<RPS_clim>, averaged across initializations per point
/// before the ratio; points with zero reference RPS are masked.
MetricMap rpss(const std::vector<CategoryProbs>& forecast_by_init,
               const std::vector<CategoryProbs>& observed_by_init,
               const CategoryProbs& clim, int lead_week);

/// Brier skill score for exceedance of the extreme threshold: K=2 categories,
/// climatological exceedance probability 0.1.
MetricMap bss(const std::vector<CategoryProbs>& forecast_by_init,
              const std::vector<CategoryProbs>& observed_by_init,
              const CategoryProbs& clim, int lead_week);

/// Pointwise a - b for maps of the same metric, grid and lead.
MetricMap skill_difference(const MetricMap& a, const MetricMap& b);

struct CouplingResult {
    MetricMap cor;
    std::vector<std::uint8_t> significant;
};

/// Pointwise correlation between two variables' anomalies across
/// initializations, with a two-sided Student-t significance mask
/// (N-2 degrees of freedom).
CouplingResult coupling_correlation(const std::vector<Field>& x_by_init,
                                    const std::vector<Field>& y_by_init,
                                    double alpha = 0.05);

/// Latitude-weighted global mean of each map, valid points only.
std::vector<std::pair<int, double>> global_skill_curve(const std::vector<MetricMap>& maps);

/// MetricMap <-> Field for GFB serialization (var records the verified
/// variable; the metric rides in the caller's filename/index).
Field metric_to_field(const MetricMap& map, VariableId var);

}  // namespace ccast
