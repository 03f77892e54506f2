#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccast/climatology.hpp"
#include "ccast/grid.hpp"

namespace ccast {

/// Coupled two-ring Lorenz-96 configuration: a fast atmospheric ring of
/// k_ocn*j_ratio sites and a slow oceanic ring, coupled bidirectionally.
/// `rate` converts model tendencies to per-day units; the ocean runs
/// timescale_ratio times slower.
struct ToyConfig {
    std::size_t k_ocn = 8;
    std::size_t j_ratio = 4;
    double forcing = 8.0;
    double timescale_ratio = 10.0;  ///< c
    double coupling = 1.0;          ///< h_c
    double dt = 0.005;              ///< integrator step, days
    double rate = 0.5;              ///< atmospheric tendency scale, 1/day
    std::size_t nlat = 8;
    std::size_t nlon = 32;  ///< must equal k_atm()
    int year_days = 360;
    int spinup_days = 360;

    std::size_t k_atm() const { return k_ocn * j_ratio; }
    void validate() const;
};

struct ToyState {
    std::vector<double> atm;
    std::vector<double> ocn;
};

/// Random initial state near the attractor's scale.
ToyState initial_state(const ToyConfig& cfg, std::uint64_t seed);

/// Deterministic RK4 trajectory, subsampled daily (day 0 = state0). Throws
/// NumericalError with the failing step on a non-finite state.
std::vector<ToyState> integrate(const ToyConfig& cfg, const ToyState& state0, int n_days);

/// Linear map from the combined (atm, ocn) site state to a grid plane:
/// plane(i,j) = row_amp[i] * sum_k coef[j][k].second * state[site] + offset.
struct ObsOperator {
    std::vector<double> row_amp;  ///< nlat
    std::vector<std::vector<std::pair<std::size_t, double>>> columns;  ///< per lon column
    double offset = 0.0;
};

/// The default registry-wide operator set (every variable observable from
/// the toy state).
std::map<VariableId, ObsOperator> make_observation_operators(const ToyConfig& cfg);

Field render_plane(const ToyConfig& cfg, const GridSpec& grid, const ObsOperator& op,
                   const ToyState& state, VariableId var, std::int64_t time);

/// Initialization calendar within a pseudo-year: twice-weekly, alternating
/// 3- and 4-day gaps from day 1.
std::vector<int> init_calendar(int year_days, int inits_per_year);

struct ToyDataset {
    GridSpec grid;
    int years = 0;
    int horizon = 0;
    std::vector<int> calendar;
};

/// Integrate one long trajectory, split it into pseudo-years and write the
/// truth/init GFB layout consumed by the rest of the pipeline:
///   truth/{year}/{var}.gfb           full-year daily series
///   inits/{year}/{date}/init_{var}.gfb   the two initialization days
///   inits/{year}/{date}/obs_{var}.gfb    verifying observations, lead 1..horizon
/// plus manifest.csv.
ToyDataset emit_dataset(const ToyConfig& cfg, int years, int inits_per_year, int horizon,
                        std::uint64_t seed, const std::string& out_dir);

/// Observation-side hindcast set (single member per entry) from an emitted
/// dataset directory, for climatology building.
HindcastSet load_truth_hindcast(const std::string& data_dir, const std::vector<int>& years,
                                const std::vector<VariableId>& vars);

}  // namespace ccast
