#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccast/model.hpp"

namespace ccast {

struct TrainConfig {
    double lr = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch = 8;
    std::size_t steps_single = 600;          ///< phase 1: single-step prediction
    std::vector<std::size_t> curriculum = {2, 4};  ///< phase 2 rollout lengths
    std::size_t steps_per_curriculum = 100;
    double kl_weight = 1e-3;  ///< beta
    /// Fraction of training steps that run with the coupling blocks dropped.
    /// The stacks then stay calibrated stand-alone: anything routed through
    /// the coupling path is information the spheres cannot compute alone,
    /// and the forecast-time ablation stays a no-op on decoupled data.
    double coupling_dropout = 0.3;
    /// Decoupled weight decay on the coupling output projections.
    double coupling_decay = 0.0;
    std::uint64_t seed = 1;
    std::size_t ckpt_every = 0;  ///< 0 = only the final checkpoint
    std::string ckpt_path;       ///< empty = no checkpoints written

    void validate() const;
};

/// Adaptive-moment (Adam) parameter updates over the model's named tensors.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Tensor> params, double lr, double beta1, double beta2,
                  double eps);
    void step();
    void zero_grad();
    std::size_t steps_taken() const { return t_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

/// Normalized per-day planes of one contiguous trajectory segment.
struct TrajectoryData {
    std::vector<Tensor> atm;  ///< {V_a, points} per day
    std::vector<Tensor> ocn;
};

/// Weighted-MSE + beta * KL(N(mu, sigma^2) || N(0,1)). Weights are
/// cos-latitude, normalized to mean one; pred/target arrive in normalized
/// units. mu/log_sigma may be undefined (no perturbation term).
struct LossParts {
    Tensor total, mse, kl;
};
LossParts csm_loss(Graph& g, const CsmModel& model,
                   const std::vector<std::pair<Tensor, Tensor>>& pred_target_pairs,
                   const std::vector<std::pair<Tensor, Tensor>>& mu_logsigma_pairs,
                   double kl_weight);

struct TraceRow {
    std::size_t step;
    int phase;
    double loss, mse, kl;
};

struct FitResult {
    std::vector<TraceRow> trace;
    bool aborted = false;  ///< non-finite loss hit; params hold the last good state
};

/// Two-phase optimization: single-step prediction with eps=0, then
/// curriculum autoregressive fine-tuning with sampled eps. Deterministic
/// for a fixed seed.
FitResult fit(CsmParams& params, const std::vector<TrajectoryData>& data,
              const TrainConfig& cfg);

/// Per-variable normalization constants from training data, written into the
/// params; returns the normalized trajectories.
std::vector<TrajectoryData> prepare_training_data(
    CsmParams& params, const std::vector<std::vector<std::vector<Field>>>& atm_days_per_traj,
    const std::vector<std::vector<std::vector<Field>>>& ocn_days_per_traj);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace ccast
