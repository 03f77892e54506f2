#include "ccast/train.hpp"

#include <cmath>
#include <fstream>

namespace ccast {

void TrainConfig::validate() const {
    if (!(lr >= 0.0)) throw DataError("train: lr must be non-negative");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw DataError("train: moment decays must lie in (0, 1)");
    }
    if (batch == 0) throw DataError("train: batch must be positive");
    for (std::size_t i = 1; i < curriculum.size(); ++i) {
        if (curriculum[i] < curriculum[i - 1]) {
            throw DataError("train: curriculum lengths must be non-decreasing");
        }
    }
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double lr, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.has_grad()) continue;
        const auto& g = p.impl_->grad;
        for (std::size_t k = 0; k < p.numel(); ++k) {
            m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g[k];
            v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g[k] * g[k];
            double mhat = m_[i][k] / bc1;
            double vhat = v_[i][k] / bc2;
            p.values()[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

LossParts csm_loss(Graph& g, const CsmModel& model,
                   const std::vector<std::pair<Tensor, Tensor>>& pred_target_pairs,
                   const std::vector<std::pair<Tensor, Tensor>>& mu_logsigma_pairs,
                   double kl_weight) {
    if (pred_target_pairs.empty()) throw DataError("loss: no prediction/target pairs");
    const auto& cfg = model.params().config;

    // cos-latitude weights per plane element, mean one, shared by all
    // variables of a sphere (variables are pre-normalized by their spread).
    auto weight_tensor = [&](std::size_t n_vars) {
        const auto& w = model.grid().lat_weights();
        double mean_w = 0.0;
        for (double x : w) mean_w += x;
        mean_w /= static_cast<double>(w.size());
        Tensor t = Tensor::zeros({n_vars, cfg.points()});
        for (std::size_t v = 0; v < n_vars; ++v) {
            for (std::size_t i = 0; i < cfg.nlat; ++i) {
                for (std::size_t j = 0; j < cfg.nlon; ++j) {
                    t.values()[v * cfg.points() + i * cfg.nlon + j] = w[i] / mean_w;
                }
            }
        }
        return t;
    };
    Tensor w_atm = weight_tensor(cfg.atm_vars.size());
    Tensor w_ocn = weight_tensor(cfg.ocn_vars.size());

    Tensor mse_sum;
    int n_terms = 0;
    for (const auto& [pred, target] : pred_target_pairs) {
        const Tensor& w = pred.shape()[0] == cfg.atm_vars.size() ? w_atm : w_ocn;
        Tensor diff = g.sub(pred, target);
        Tensor term = g.mean(g.mul(w, g.mul(diff, diff)));
        mse_sum = mse_sum.defined() ? g.add(mse_sum, term) : term;
        ++n_terms;
    }
    Tensor mse = g.scale(mse_sum, 1.0 / static_cast<double>(n_terms));

    LossParts parts;
    parts.mse = mse;
    if (!mu_logsigma_pairs.empty() && kl_weight != 0.0) {
        Tensor kl_sum;
        for (const auto& [mu, log_sigma] : mu_logsigma_pairs) {
            // KL(N(mu, sigma^2) || N(0,1)) = (mu^2 + sigma^2 - 1 - 2 log sigma) / 2
            Tensor mu2 = g.mul(mu, mu);
            Tensor sigma2 = g.exp(g.scale(log_sigma, 2.0));
            Tensor inner = g.sub(g.add_scalar(g.add(mu2, sigma2), -1.0),
                                 g.scale(log_sigma, 2.0));
            Tensor term = g.scale(g.mean(inner), 0.5);
            kl_sum = kl_sum.defined() ? g.add(kl_sum, term) : term;
        }
        parts.kl = g.scale(kl_sum, 1.0 / static_cast<double>(mu_logsigma_pairs.size()));
        parts.total = g.add(mse, g.scale(parts.kl, kl_weight));
    } else {
        parts.kl = Tensor::scalar_value(0.0);
        parts.total = mse;
    }
    return parts;
}

std::vector<TrajectoryData> prepare_training_data(
    CsmParams& params, const std::vector<std::vector<std::vector<Field>>>& atm_days_per_traj,
    const std::vector<std::vector<std::vector<Field>>>& ocn_days_per_traj) {
    const auto& cfg = params.config;
    if (atm_days_per_traj.size() != ocn_days_per_traj.size()) {
        throw DataError("training data: trajectory count mismatch");
    }

    // Per-variable mean and spread pooled over all days and points.
    auto compute_norm = [&](const std::vector<std::vector<std::vector<Field>>>& trajs,
                            std::size_t n_vars, std::vector<double>& mean,
                            std::vector<double>& sd) {
        mean.assign(n_vars, 0.0);
        sd.assign(n_vars, 0.0);
        std::vector<std::size_t> count(n_vars, 0);
        for (const auto& traj : trajs) {
            for (const auto& day : traj) {
                for (std::size_t v = 0; v < n_vars; ++v) {
                    for (double x : day[v].values) {
                        mean[v] += x;
                        ++count[v];
                    }
                }
            }
        }
        for (std::size_t v = 0; v < n_vars; ++v) mean[v] /= static_cast<double>(count[v]);
        for (const auto& traj : trajs) {
            for (const auto& day : traj) {
                for (std::size_t v = 0; v < n_vars; ++v) {
                    for (double x : day[v].values) {
                        sd[v] += (x - mean[v]) * (x - mean[v]);
                    }
                }
            }
        }
        for (std::size_t v = 0; v < n_vars; ++v) {
            sd[v] = std::sqrt(sd[v] / static_cast<double>(count[v]));
            if (sd[v] <= 0.0) sd[v] = 1.0;  // constant plane, leave unscaled
        }
    };
    compute_norm(atm_days_per_traj, cfg.atm_vars.size(), params.atm.norm_mean,
                 params.atm.norm_std);
    compute_norm(ocn_days_per_traj, cfg.ocn_vars.size(), params.ocn.norm_mean,
                 params.ocn.norm_std);

    CsmModel model(params);
    std::vector<TrajectoryData> out;
    for (std::size_t t = 0; t < atm_days_per_traj.size(); ++t) {
        TrajectoryData td;
        for (const auto& day : atm_days_per_traj[t]) {
            td.atm.push_back(model.planes_from_fields(day, true));
        }
        for (const auto& day : ocn_days_per_traj[t]) {
            td.ocn.push_back(model.planes_from_fields(day, false));
        }
        if (td.atm.size() != td.ocn.size()) {
            throw DataError("training data: sphere day counts differ");
        }
        out.push_back(std::move(td));
    }
    return out;
}

namespace {

struct SampleRef {
    std::size_t traj;
    std::size_t t;  ///< index of the "current" day; needs t-1 and t+L in range
};

std::vector<SampleRef> enumerate_samples(const std::vector<TrajectoryData>& data,
                                         std::size_t rollout_len) {
    std::vector<SampleRef> samples;
    for (std::size_t tr = 0; tr < data.size(); ++tr) {
        const std::size_t days = data[tr].atm.size();
        if (days < rollout_len + 2) continue;
        for (std::size_t t = 1; t + rollout_len < days; ++t) {
            samples.push_back({tr, t});
        }
    }
    return samples;
}

/// Copy current parameter values (the rolling "last good" snapshot).
std::vector<std::vector<double>> snapshot(const CsmParams& params) {
    std::vector<std::vector<double>> snap;
    for (const auto& [name, t] : params.named()) snap.push_back(t.values());
    return snap;
}

void restore(CsmParams& params, const std::vector<std::vector<double>>& snap) {
    std::size_t i = 0;
    for (auto& [name, t] : params.named()) t.values() = snap[i++];
}

}  // namespace

FitResult fit(CsmParams& params, const std::vector<TrajectoryData>& data,
              const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw DataError("fit: no training data");
    CsmModel model(params);

    std::vector<Tensor> trainable;
    for (const auto& [name, t] : params.named()) trainable.push_back(t);
    AdamOptimizer opt(trainable, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

    Rng batch_rng(derive_seed(cfg.seed, seed_purpose::train_batch, 0));
    Rng eps_rng(derive_seed(cfg.seed, seed_purpose::member_eps, 0));
    Rng dropout_rng(derive_seed(cfg.seed, seed_purpose::train_dropout, 0));

    FitResult result;
    std::size_t global_step = 0;
    auto last_good = snapshot(params);

    auto run_phase = [&](int phase, std::size_t n_steps, std::size_t rollout_len,
                         bool sampled_eps) -> bool {
        auto samples = enumerate_samples(data, rollout_len);
        if (samples.empty()) {
            throw DataError("fit: trajectories shorter than the rollout length " +
                            std::to_string(rollout_len));
        }
        auto batch_loss = [&](Graph& g, bool drop_coupling) {
            std::vector<std::pair<Tensor, Tensor>> pred_target;
            std::vector<std::pair<Tensor, Tensor>> mu_ls;
            for (std::size_t b = 0; b < cfg.batch; ++b) {
                const auto& ref = samples[batch_rng.next_u64() % samples.size()];
                const auto& td = data[ref.traj];
                Tensor atm_prev = td.atm[ref.t - 1];
                Tensor atm_cur = td.atm[ref.t];
                Tensor ocn_prev = td.ocn[ref.t - 1];
                Tensor ocn_cur = td.ocn[ref.t];
                for (std::size_t l = 1; l <= rollout_len; ++l) {
                    Tensor eps_a, eps_o;
                    bool apply_noise = l == 1 || params.config.resample_noise;
                    if (apply_noise) {
                        eps_a = sampled_eps ? model.sample_eps(eps_rng) : model.zero_eps();
                        eps_o = sampled_eps ? model.sample_eps(eps_rng) : model.zero_eps();
                    }
                    auto out = model.step(g, atm_prev, atm_cur, ocn_prev, ocn_cur, eps_a,
                                          eps_o, drop_coupling, static_cast<int>(l));
                    pred_target.emplace_back(out.atm_next, td.atm[ref.t + l]);
                    pred_target.emplace_back(out.ocn_next, td.ocn[ref.t + l]);
                    if (out.atm_mu.defined()) {
                        mu_ls.emplace_back(out.atm_mu, out.atm_log_sigma);
                        mu_ls.emplace_back(out.ocn_mu, out.ocn_log_sigma);
                    }
                    atm_prev = atm_cur;
                    atm_cur = out.atm_next;
                    ocn_prev = ocn_cur;
                    ocn_cur = out.ocn_next;
                }
            }
            return csm_loss(g, model, pred_target, mu_ls, cfg.kl_weight);
        };

        for (std::size_t s = 0; s < n_steps; ++s) {
            try {
                Graph g(true);
                bool drop = dropout_rng.uniform() < cfg.coupling_dropout;
                auto loss = batch_loss(g, drop);
                double lv = loss.total.scalar();
                if (!std::isfinite(lv)) throw NumericalError("non-finite loss");
                opt.zero_grad();
                g.backward(loss.total);
                opt.step();
                if (cfg.coupling_decay > 0.0) {
                    double shrink = 1.0 - cfg.lr * cfg.coupling_decay;
                    for (auto& cp : params.coupling) {
                        for (double& w : cp.out.w.values()) w *= shrink;
                        for (double& b : cp.out.b.values()) b *= shrink;
                    }
                }
                last_good = snapshot(params);

                ++global_step;
                result.trace.push_back({global_step, phase, lv, loss.mse.scalar(),
                                        loss.kl.scalar()});
                if (cfg.ckpt_every > 0 && !cfg.ckpt_path.empty() &&
                    global_step % cfg.ckpt_every == 0) {
                    params.save(cfg.ckpt_path);
                }
            } catch (const NumericalError&) {
                restore(params, last_good);
                result.aborted = true;
                return false;
            }
        }
        return true;
    };

    if (run_phase(1, cfg.steps_single, 1, false)) {
        for (std::size_t ci = 0; ci < cfg.curriculum.size(); ++ci) {
            if (!run_phase(2, cfg.steps_per_curriculum, cfg.curriculum[ci], true)) break;
        }
    }
    if (!cfg.ckpt_path.empty()) params.save(cfg.ckpt_path);
    return result;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os << "step,phase,loss,mse,kl\n";
    os.precision(17);
    for (const auto& row : trace) {
        os << row.step << "," << row.phase << "," << row.loss << "," << row.mse << ","
           << row.kl << "\n";
    }
}

}  // namespace ccast
