#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccast/grid.hpp"
#include "ccast/rng.hpp"
#include "ccast/tensor.hpp"

namespace ccast {

/// Model configuration. Land variables belong in atm_vars, sea-ice in
/// ocn_vars. blocks_per_stack must be divisible by coupling_every and
/// d_model by n_heads; the grid must tile by the patch size.
struct CsmConfig {
    std::size_t nlat = 8;
    std::size_t nlon = 32;
    std::vector<VariableId> atm_vars;
    std::vector<VariableId> ocn_vars;
    std::size_t d_model = 32;
    std::size_t n_heads = 4;
    std::size_t blocks_per_stack = 8;
    std::size_t coupling_every = 4;
    std::size_t patch = 2;
    std::size_t ff_mult = 4;
    std::size_t perturb_hidden = 32;
    std::size_t ensemble_size = 8;
    std::size_t rollout_days = 60;
    bool resample_noise = false;  ///< re-sample the perturbation every step

    static CsmConfig defaults();
    void validate() const;
    std::size_t tokens() const { return (nlat / patch) * (nlon / patch); }
    std::size_t points() const { return nlat * nlon; }
    std::size_t coupling_blocks() const { return blocks_per_stack / coupling_every; }
};

struct LinearParams {
    Tensor w, b;
};

struct BlockParams {
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    LinearParams q, k, v, o, ff1, ff2;
};

struct PerturbParams {
    LinearParams l1, l2;  ///< l2 emits (mu, log sigma) side by side
};

struct CouplingParams {
    BlockParams block;  ///< operates at width 2*d_model
    LinearParams out;   ///< zero-initialized output projection
};

struct SphereParams {
    LinearParams embed;
    Tensor pos;
    PerturbParams perturb;
    std::vector<BlockParams> blocks;
    Tensor dec_ln_g, dec_ln_b;
    LinearParams dec;
    std::vector<double> norm_mean, norm_std;  ///< per variable, not trained
};

struct CsmParams {
    CsmConfig config;
    SphereParams atm, ocn;
    std::vector<CouplingParams> coupling;

    static CsmParams init(const CsmConfig& config, std::uint64_t seed);

    /// Trainable tensors in a fixed order.
    std::vector<std::pair<std::string, Tensor>> named() const;
    void zero_grad() const;

    /// Zero every coupling output projection (the forecast-time ablation
    /// switch).
    void zero_coupling_projections();
    double max_abs_coupling_projection() const;

    /// Self-describing checkpoint (configuration rides along).
    void save(const std::string& path) const;
    static CsmParams load(const std::string& path);

    CsmParams clone() const;
};

enum class PerturbMode {
    None,      ///< skip the perturbation module entirely
    MeanOnly,  ///< eps = 0, so Z = mu (the deterministic control)
    Sampled,   ///< eps ~ N(0,1) from the member stream
};

/// One day of planes per sphere for two consecutive days, ordered like the
/// config variable lists.
struct StepInputFields {
    std::vector<Field> atm_prev, atm_cur, ocn_prev, ocn_cur;
};

struct MemberForecast {
    std::map<VariableId, FieldSeries> vars;
};

struct EnsembleForecast {
    std::vector<MemberForecast> members;
};

/// Forward passes of the coupled model. Normalized planes {V, points} are
/// the working currency; Fields are converted at the boundary.
class CsmModel {
public:
    explicit CsmModel(const CsmParams& params);

    struct PerturbOut {
        Tensor out, mu, log_sigma;
    };
    /// X + Z with Z = mu + exp(log_sigma) * eps from the sphere's
    /// perturbation network.
    PerturbOut perturb(Graph& g, const SphereParams& sphere, const Tensor& x,
                       const Tensor& eps) const;

    struct CouplingOut {
        Tensor atm, ocn;
    };
    /// Concatenated-feature transformer block behind the zero-initialized
    /// projection; the caller adds the halves residually.
    CouplingOut coupling_block(Graph& g, const CouplingParams& cp, const Tensor& h_atm,
                               const Tensor& h_ocn) const;

    struct StepOut {
        Tensor atm_next, ocn_next;  ///< normalized planes {V, points}
        Tensor atm_mu, atm_log_sigma, ocn_mu, ocn_log_sigma;  ///< set when perturbed
    };
    /// One 24 h step. eps tensors may be undefined to skip perturbation.
    StepOut step(Graph& g, const Tensor& atm_prev, const Tensor& atm_cur,
                 const Tensor& ocn_prev, const Tensor& ocn_cur, const Tensor& eps_atm,
                 const Tensor& eps_ocn, bool ablate_coupling = false,
                 int step_index = 0) const;

    /// Normalized planes from fields ordered like the config lists.
    Tensor planes_from_fields(const std::vector<Field>& fields, bool atm_sphere) const;
    std::vector<Field> fields_from_planes(const Tensor& planes, bool atm_sphere,
                                          std::int64_t time) const;

    /// Autoregressive rollout without gradients.
    MemberForecast rollout(const StepInputFields& init, std::size_t n_steps,
                           PerturbMode mode, std::uint64_t eps_seed,
                           bool ablate_coupling = false) const;

    /// Member m's noise stream is derived from (base_seed, m); member 0 is
    /// the mean-only control.
    EnsembleForecast ensemble_forecast(const StepInputFields& init, std::size_t members,
                                       std::uint64_t base_seed,
                                       bool ablate_coupling = false) const;

    Tensor sample_eps(Rng& rng) const;
    Tensor zero_eps() const;

    const CsmParams& params() const { return params_; }
    const GridSpec& grid() const { return grid_; }

private:
    Tensor encode(Graph& g, const SphereParams& sphere, const Tensor& prev,
                  const Tensor& cur) const;
    Tensor decode(Graph& g, const SphereParams& sphere, const Tensor& h,
                  std::size_t n_vars) const;
    Tensor transformer_block(Graph& g, const BlockParams& bp, const Tensor& x,
                             std::size_t heads) const;

    const CsmParams& params_;
    GridSpec grid_;
    // Flat index tables: planes {2V, P} -> tokens {T, F} and tokens
    // {T, V*p*p} -> planes {V, P}.
    std::vector<std::size_t> patch_atm_, patch_ocn_;
    std::vector<std::size_t> unpatch_atm_, unpatch_ocn_;

    friend class TrainDriver;
};

}  // namespace ccast
