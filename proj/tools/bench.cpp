// Timings of the OpenMP kernels against the serial reference
// implementations: correlation maps, matrix multiply, ensemble rollouts.

#include <chrono>
#include <cstdio>
#include <vector>

#include "ccast/model.hpp"
#include "ccast/ref.hpp"
#include "ccast/tensor.hpp"
#include "ccast/toytruth.hpp"
#include "ccast/verify.hpp"

using namespace ccast;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(const char* name, double serial_s, double parallel_s) {
    std::printf("%-28s serial %8.3f s   parallel %8.3f s   speedup %.2fx\n", name, serial_s,
                parallel_s, serial_s / parallel_s);
}

void bench_correlation_map() {
    const std::size_t npts = 96 * 192;
    const std::size_t n_init = 104;
    Rng rng(7);
    std::vector<std::vector<double>> pred(n_init), obs(n_init);
    for (std::size_t j = 0; j < n_init; ++j) {
        pred[j].resize(npts);
        obs[j].resize(npts);
        for (std::size_t p = 0; p < npts; ++p) {
            pred[j][p] = rng.normal();
            obs[j][p] = 0.5 * pred[j][p] + rng.normal();
        }
    }

    std::vector<double> ref_out;
    std::vector<unsigned char> ref_valid;
    auto t0 = Clock::now();
    ref::correlation_map(pred, obs, ref_out, ref_valid);
    double serial_s = seconds_since(t0);

    GridSpec grid = GridSpec::uniform(96, 192);
    MatchedSample sample;
    for (std::size_t j = 0; j < n_init; ++j) {
        Field fp(grid, VariableId::T2M, static_cast<std::int64_t>(j));
        fp.values = pred[j];
        Field fo = fp;
        fo.values = obs[j];
        sample.pred.push_back(std::move(fp));
        sample.obs.push_back(std::move(fo));
    }
    t0 = Clock::now();
    MetricMap map = tcc(sample);
    double parallel_s = seconds_since(t0);

    double max_diff = 0.0;
    for (std::size_t p = 0; p < npts; ++p) {
        if (map.mask[p] && ref_valid[p]) {
            max_diff = std::max(max_diff, std::abs(map.values[p] - ref_out[p]));
        }
    }
    report("correlation map 96x192x104", serial_s, parallel_s);
    std::printf("%-28s max |difference| = %.3e\n", "", max_diff);
}

void bench_matmul() {
    const std::size_t n = 384;
    Rng rng(11);
    std::vector<double> a(n * n), b(n * n), c_ref(n * n);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();

    auto t0 = Clock::now();
    ref::matmul(a.data(), b.data(), c_ref.data(), n, n, n);
    double serial_s = seconds_since(t0);

    Graph g(false);
    Tensor ta = Tensor::from_values({n, n}, a);
    Tensor tb = Tensor::from_values({n, n}, b);
    t0 = Clock::now();
    Tensor tc = g.matmul(ta, tb);
    double parallel_s = seconds_since(t0);

    double max_diff = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) {
        max_diff = std::max(max_diff, std::abs(tc.values()[i] - c_ref[i]));
    }
    report("matmul 384x384", serial_s, parallel_s);
    std::printf("%-28s max |difference| = %.3e\n", "", max_diff);
}

void bench_ensemble() {
    CsmConfig cfg = CsmConfig::defaults();
    cfg.nlat = 8;
    cfg.nlon = 32;
    cfg.d_model = 32;
    cfg.blocks_per_stack = 4;
    cfg.coupling_every = 4;
    cfg.rollout_days = 20;
    CsmParams params = CsmParams::init(cfg, 3);
    CsmModel model(params);

    ToyConfig toy;
    toy.nlat = cfg.nlat;
    toy.nlon = cfg.nlon;
    auto ops = make_observation_operators(toy);
    auto traj = integrate(toy, initial_state(toy, 5), 2);
    GridSpec grid = GridSpec::uniform(cfg.nlat, cfg.nlon);
    StepInputFields init;
    for (VariableId v : cfg.atm_vars) {
        init.atm_prev.push_back(render_plane(toy, grid, ops.at(v), traj[0], v, 0));
        init.atm_cur.push_back(render_plane(toy, grid, ops.at(v), traj[1], v, 1));
    }
    for (VariableId v : cfg.ocn_vars) {
        init.ocn_prev.push_back(render_plane(toy, grid, ops.at(v), traj[0], v, 0));
        init.ocn_cur.push_back(render_plane(toy, grid, ops.at(v), traj[1], v, 1));
    }

    const std::size_t members = 8;
    auto t0 = Clock::now();
    std::vector<MemberForecast> serial_members;
    for (std::size_t m = 0; m < members; ++m) {
        serial_members.push_back(model.rollout(
            init, cfg.rollout_days, m == 0 ? PerturbMode::MeanOnly : PerturbMode::Sampled,
            derive_seed(9, seed_purpose::member_eps, m)));
    }
    double serial_s = seconds_since(t0);

    t0 = Clock::now();
    EnsembleForecast ens = model.ensemble_forecast(init, members, 9);
    double parallel_s = seconds_since(t0);

    double max_diff = 0.0;
    for (std::size_t m = 0; m < members; ++m) {
        for (const auto& [var, series] : ens.members[m].vars) {
            for (const auto& [t, f] : series.entries()) {
                const Field& s = serial_members[m].vars.at(var).at(t);
                for (std::size_t p = 0; p < f.values.size(); ++p) {
                    max_diff = std::max(max_diff, std::abs(f.values[p] - s.values[p]));
                }
            }
        }
    }
    report("ensemble 8 x 20-day rollout", serial_s, parallel_s);
    std::printf("%-28s max |difference| = %.3e\n", "", max_diff);
}

}  // namespace

int main() {
    bench_correlation_map();
    bench_matmul();
    bench_ensemble();
    return 0;
}
