#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "ccast/grid.hpp"

namespace ccast {

/// Leading modes of the weighted covariance of a sample x state matrix.
/// Patterns have unit Euclidean norm under the stored weights and are
/// pairwise weighted-orthogonal.
struct EofBasis {
    std::vector<std::vector<double>> modes;
    std::vector<double> explained_variance;  ///< fraction per mode, non-increasing
    std::vector<double> weights;
    std::vector<double> center;  ///< training-sample mean state
    std::vector<double> pc_std;  ///< population std of each training PC

    std::size_t state_dim() const { return weights.size(); }

    /// Weighted projection of a state onto mode k (centered first).
    double project(const std::vector<double>& state, std::size_t k) const;
    /// Projection standardized by the training PC spread.
    double project_standardized(const std::vector<double>& state, std::size_t k) const;
    /// Reconstruct a state from all stored modes.
    std::vector<double> reconstruct(const std::vector<double>& pcs) const;
};

/// SVD of the centered, sqrt-weight-scaled data matrix; sign fixed so the
/// largest-|loading| element of each pattern is positive. Throws when
/// n_modes exceeds the numerical rank.
EofBasis eof(const std::vector<std::vector<double>>& samples,
             const std::vector<double>& weights, std::size_t n_modes);

struct RmmPoint {
    std::int64_t time = 0;
    double rmm1 = 0.0;
    double rmm2 = 0.0;

    double amplitude() const;
    /// Octants of atan2(rmm2, rmm1), phase 1 starting at 180 degrees and
    /// proceeding counterclockwise.
    int phase() const;
};
using RmmSeries = std::vector<RmmPoint>;

/// Combined-EOF basis for the tropical-index pipeline: meridional averages
/// over the latitude band, per-variable normalization, two leading modes.
struct RmmBasis {
    EofBasis basis;
    double band_lat_min = -15.0;
    double band_lat_max = 15.0;
    std::vector<double> var_std;  ///< one per input variable, in input order
    std::size_t nlon = 0;

    /// Patterns as native-grid fields (profile broadcast across the band)
    /// plus a scalar CSV; the inverse of fit's meridional average.
    void save(const std::string& dir, const GridSpec& grid,
              const std::vector<VariableId>& vars) const;
    static RmmBasis load(const std::string& dir, const std::vector<VariableId>& vars);
};

/// Fit on pooled hindcast anomaly snapshots (same day count per variable).
RmmBasis fit_rmm_basis(const std::vector<std::vector<Field>>& anomalies_per_var,
                       double band_lat_min = -15.0, double band_lat_max = 15.0);

/// Project anomaly series (OLR, U850, U200 order must match the fit) onto
/// the basis; both components standardized by their hindcast spread.
RmmSeries rmm(const std::vector<const FieldSeries*>& anomalies_per_var,
              const RmmBasis& basis);

/// Bivariate correlation across initializations at one lead.
std::optional<double> bivariate_cor(const std::vector<RmmPoint>& obs,
                                    const std::vector<RmmPoint>& forecast);

struct IndexPoint {
    std::int64_t time = 0;
    double value = 0.0;
};
using IndexSeries = std::vector<IndexPoint>;

/// Leading-EOF scalar index over a fixed domain (the North Atlantic box for
/// the NAO use).
struct DomainIndexBasis {
    EofBasis basis;
    BoxSpec domain;
    std::vector<std::size_t> point_index;  ///< grid points inside the domain

    void save(const std::string& dir, const GridSpec& grid, VariableId var) const;
    static DomainIndexBasis load(const std::string& dir, const GridSpec& grid);
};

DomainIndexBasis fit_domain_index_basis(const std::vector<Field>& anomalies,
                                        const BoxSpec& domain);

/// Standardized leading-mode projection of each field in the series.
IndexSeries domain_index(const FieldSeries& anomalies, const DomainIndexBasis& basis);

/// Largest L such that cor >= threshold for every lead <= L; input ordered
/// from day 1.
int skill_horizon(const std::vector<std::pair<int, double>>& cor_by_lead,
                  double threshold = 0.5);

}  // namespace ccast
