#pragma once

#include <string>
#include <vector>

#include "ccast/config.hpp"

namespace ccast {

/// Library-level command implementations shared by the CLI binary and the
/// test suites. All outputs land under `out` with a manifest.txt of sha-256
/// digests.

void cmd_gen_truth(const RunConfig& cfg, std::uint64_t seed, const std::string& out);

/// Observation climatology from the emitted truth, hindcast years
/// 1..years-1 (the last year is held out for testing).
void cmd_build_clim(const RunConfig& cfg, const std::string& data_dir, const std::string& out);

void cmd_train(const RunConfig& cfg, const std::string& data_dir, std::uint64_t seed,
               const std::string& out);

struct InitKey {
    int year;
    int date;
};

/// Ensemble forecasts for the given initializations (empty = every init of
/// the final year). Member layout: out/{year}/{date}/m{k}/{var}.gfb.
void cmd_forecast(const RunConfig& cfg, const std::string& data_dir, const std::string& ckpt,
                  const std::vector<InitKey>& inits, std::size_t members, std::uint64_t seed,
                  bool ablate_coupling, const std::string& out);

/// Deterministic, probabilistic and extreme verification maps plus the
/// global skill curve table. The forecast directory may be the dataset
/// directory itself (observations verified against themselves).
void cmd_verify(const RunConfig& cfg, const std::string& data_dir,
                const std::string& clim_dir, const std::string& forecast_dir,
                const std::string& forecast_clim_dir, const std::string& out);

/// RMM and NAO index skill against lead time.
void cmd_mjo(const RunConfig& cfg, const std::string& data_dir, const std::string& clim_dir,
             const std::string& forecast_dir, const std::string& forecast_clim_dir,
             const std::string& out);

/// Cross-sphere correlation maps with significance masks for the report's
/// variable pairs.
void cmd_couple_diag(const RunConfig& cfg, const std::string& data_dir,
                     const std::string& clim_dir, const std::string& forecast_dir,
                     const std::string& forecast_clim_dir, const std::string& out);

/// Merge two verify outputs (coupled vs ablated) into one comparison table.
void cmd_report(const std::string& coupled_verify_dir, const std::string& ablated_verify_dir,
                const std::string& out);

// Shared helpers (also used by tests).

std::vector<InitKey> list_inits(const std::string& dir);
std::vector<FieldSeries> load_forecast_members(const std::string& forecast_dir, int year,
                                               int date, VariableId var);
FieldSeries ensemble_mean(const std::vector<FieldSeries>& members);
std::vector<VariableId> forecast_variables(const RunConfig& cfg);
StepInputFields load_init_fields(const RunConfig& cfg, const std::string& data_dir, int year,
                                 int date);

}  // namespace ccast
