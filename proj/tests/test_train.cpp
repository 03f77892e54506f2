#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ccast/toytruth.hpp"
#include "ccast/train.hpp"

using namespace ccast;
namespace fs = std::filesystem;

namespace {

CsmConfig mini_config() {
    CsmConfig c;
    c.nlat = 4;
    c.nlon = 8;
    c.atm_vars = {VariableId::T2M, VariableId::TP};
    c.ocn_vars = {VariableId::SSH, VariableId::SIC};
    c.d_model = 8;
    c.n_heads = 2;
    c.blocks_per_stack = 2;
    c.coupling_every = 2;
    c.patch = 2;
    c.ff_mult = 2;
    c.perturb_hidden = 8;
    c.rollout_days = 4;
    return c;
}

/// Tiny synthetic trajectories from the coupled toy system.
std::vector<TrajectoryData> toy_trajectories(CsmParams& params, int days,
                                             std::uint64_t seed) {
    ToyConfig toy;
    toy.k_ocn = 4;
    toy.j_ratio = 2;
    toy.nlat = params.config.nlat;
    toy.nlon = params.config.nlon;
    auto ops = make_observation_operators(toy);
    GridSpec grid = GridSpec::uniform(toy.nlat, toy.nlon);
    auto traj = integrate(toy, initial_state(toy, seed), days + 50);

    std::vector<std::vector<Field>> atm_days, ocn_days;
    for (int d = 50; d < days + 50; ++d) {
        std::vector<Field> a, o;
        for (VariableId v : params.config.atm_vars) {
            a.push_back(render_plane(toy, grid, ops.at(v), traj[d], v, d));
        }
        for (VariableId v : params.config.ocn_vars) {
            o.push_back(render_plane(toy, grid, ops.at(v), traj[d], v, d));
        }
        atm_days.push_back(std::move(a));
        ocn_days.push_back(std::move(o));
    }
    return prepare_training_data(params, {atm_days}, {ocn_days});
}

}  // namespace

TEST_CASE("loss vanishes for a perfect prediction with a standard-normal head") {
    CsmParams params = CsmParams::init(mini_config(), 1);
    CsmModel model(params);
    Graph g;
    Rng rng(2);
    Tensor pred = Tensor::zeros({2, 32});
    for (auto& v : pred.values()) v = rng.normal();
    Tensor target = pred.clone();
    Tensor mu = Tensor::zeros({4, 8});
    Tensor ls = Tensor::zeros({4, 8});  // sigma = 1
    auto parts = csm_loss(g, model, {{pred, target}}, {{mu, ls}}, 0.7);
    CHECK(parts.mse.scalar() == doctest::Approx(0.0));
    CHECK(parts.kl.scalar() == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(parts.total.scalar() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("zero kl weight reduces the loss to the weighted mse") {
    CsmParams params = CsmParams::init(mini_config(), 1);
    CsmModel model(params);
    Graph g;
    Rng rng(3);
    Tensor pred = Tensor::zeros({2, 32});
    Tensor target = Tensor::zeros({2, 32});
    for (auto& v : pred.values()) v = rng.normal();
    Tensor mu = Tensor::full({4, 8}, 0.3);
    Tensor ls = Tensor::full({4, 8}, -0.2);
    auto with = csm_loss(g, model, {{pred, target}}, {{mu, ls}}, 0.0);
    CHECK(with.total.scalar() == doctest::Approx(with.mse.scalar()).epsilon(1e-14));
}

TEST_CASE("closed-form gaussian kl at mu=1 sigma=1") {
    // (mu^2 + sigma^2 - 1 - 2 log sigma)/2 = 1/2 per coordinate.
    CsmParams params = CsmParams::init(mini_config(), 1);
    CsmModel model(params);
    Graph g;
    Tensor pred = Tensor::zeros({2, 32});
    Tensor target = Tensor::zeros({2, 32});
    Tensor mu = Tensor::full({1, 1}, 1.0);
    Tensor ls = Tensor::zeros({1, 1});
    const double beta = 0.8;
    auto parts = csm_loss(g, model, {{pred, target}}, {{mu, ls}}, beta);
    CHECK(parts.kl.scalar() == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(parts.total.scalar() == doctest::Approx(0.5 * beta).epsilon(1e-14));
}

TEST_CASE("loss weights follow cos latitude") {
    // Two rows with weights w0 != w1: an error on the heavier row costs more.
    CsmConfig cfg = mini_config();
    CsmParams params = CsmParams::init(cfg, 1);
    CsmModel model(params);
    const std::size_t pts = cfg.points();
    auto loss_with_error_at = [&](std::size_t row) {
        Graph g;
        Tensor pred = Tensor::zeros({2, pts});
        Tensor target = Tensor::zeros({2, pts});
        pred.values()[row * cfg.nlon] = 1.0;
        return csm_loss(g, model, {{pred, target}}, {}, 0.0).total.scalar();
    };
    const auto& w = model.grid().lat_weights();
    CHECK(loss_with_error_at(0) / loss_with_error_at(1) ==
          doctest::Approx(w[0] / w[1]).epsilon(1e-12));
}

TEST_CASE("one optimizer step matches a hand-stepped reference") {
    // Three parameters with fixed gradients, one Adam update.
    std::vector<double> values = {1.0, -2.0, 0.5};
    std::vector<double> grads = {0.3, -0.1, 0.7};
    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;

    std::vector<Tensor> params;
    for (int i = 0; i < 3; ++i) {
        Tensor t = Tensor::from_values({1}, {values[i]}, true);
        t.grad()[0] = grads[i];
        params.push_back(t);
    }
    AdamOptimizer opt(params, lr, b1, b2, eps);
    opt.step();

    for (int i = 0; i < 3; ++i) {
        // Reference update written out by hand.
        double m = (1.0 - b1) * grads[i];
        double v = (1.0 - b2) * grads[i] * grads[i];
        double mhat = m / (1.0 - b1);
        double vhat = v / (1.0 - b2);
        double expect = values[i] - lr * mhat / (std::sqrt(vhat) + eps);
        CHECK(params[i].values()[0] == doctest::Approx(expect).epsilon(1e-12));
    }

    // Second step with new gradients.
    std::vector<double> grads2 = {-0.2, 0.4, 0.1};
    std::vector<double> m = {0.0, 0.0, 0.0}, v = {0.0, 0.0, 0.0}, ref(3);
    for (int i = 0; i < 3; ++i) {
        m[i] = (1.0 - b1) * grads[i];
        v[i] = (1.0 - b2) * grads[i] * grads[i];
        ref[i] = values[i] - lr * (m[i] / (1.0 - b1)) / (std::sqrt(v[i] / (1.0 - b2)) + eps);
    }
    for (int i = 0; i < 3; ++i) {
        params[i].zero_grad();
        params[i].grad()[0] = grads2[i];
    }
    opt.step();
    for (int i = 0; i < 3; ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * grads2[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grads2[i] * grads2[i];
        double mhat = m[i] / (1.0 - b1 * b1);
        double vhat = v[i] / (1.0 - b2 * b2);
        ref[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        CHECK(params[i].values()[0] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    CsmParams params = CsmParams::init(mini_config(), 5);
    auto before = params.named();
    std::vector<std::vector<double>> saved;
    for (const auto& [name, t] : before) saved.push_back(t.values());

    auto data = toy_trajectories(params, 20, 6);
    TrainConfig tc;
    tc.lr = 0.0;
    tc.steps_single = 3;
    tc.curriculum = {2};
    tc.steps_per_curriculum = 1;
    tc.batch = 2;
    tc.seed = 7;
    fit(params, data, tc);

    std::size_t i = 0;
    for (const auto& [name, t] : params.named()) {
        for (std::size_t k = 0; k < t.numel(); ++k) CHECK(t.values()[k] == saved[i][k]);
        ++i;
    }
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto run = [](const std::string& tag) {
        CsmParams params = CsmParams::init(mini_config(), 11);
        auto data = toy_trajectories(params, 24, 12);
        TrainConfig tc;
        tc.lr = 1e-3;
        tc.steps_single = 4;
        tc.curriculum = {2};
        tc.steps_per_curriculum = 2;
        tc.batch = 2;
        tc.seed = 13;
        tc.ckpt_path =
            (fs::temp_directory_path() / ("ccast_train_" + tag + ".ckpt")).string();
        auto result = fit(params, data, tc);
        return std::make_pair(result.trace, tc.ckpt_path);
    };
    auto [trace_a, path_a] = run("a");
    auto [trace_b, path_b] = run("b");
    REQUIRE(trace_a.size() == trace_b.size());
    for (std::size_t i = 0; i < trace_a.size(); ++i) {
        CHECK(trace_a[i].loss == trace_b[i].loss);
    }
    // Checkpoints byte-identical.
    std::ifstream fa(path_a, std::ios::binary), fb(path_b, std::ios::binary);
    std::ostringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
}

TEST_CASE("the loss decreases on a fixed tiny dataset") {
    CsmParams params = CsmParams::init(mini_config(), 21);
    auto data = toy_trajectories(params, 40, 22);
    TrainConfig tc;
    tc.lr = 3e-3;
    tc.steps_single = 50;
    tc.curriculum = {};
    tc.batch = 4;
    tc.seed = 23;
    auto result = fit(params, data, tc);
    REQUIRE(result.trace.size() == 50);
    CHECK(!result.aborted);

    double first5 = 0.0, last5 = 0.0;
    for (int i = 0; i < 5; ++i) {
        first5 += result.trace[i].loss;
        last5 += result.trace[45 + i].loss;
    }
    CHECK(last5 < 0.5 * first5);  // halves within 50 steps on this problem

    // Mostly downhill: a smoothed check tolerating batch noise.
    int improved = 0;
    for (int i = 10; i < 50; ++i) {
        if (result.trace[i].loss < result.trace[i - 10].loss) ++improved;
    }
    CHECK(improved >= 28);
}

TEST_CASE("full-model gradients pass finite differences on a miniature config") {
    CsmParams params = CsmParams::init(mini_config(), 31);
    CsmModel model(params);
    auto data = toy_trajectories(params, 10, 32);

    auto forward = [&](Graph& g) {
        Tensor eps_a = model.zero_eps();
        Tensor eps_o = model.zero_eps();
        auto out = model.step(g, data[0].atm[0], data[0].atm[1], data[0].ocn[0],
                              data[0].ocn[1], eps_a, eps_o);
        return csm_loss(g, model, {{out.atm_next, data[0].atm[2]},
                                   {out.ocn_next, data[0].ocn[2]}},
                        {{out.atm_mu, out.atm_log_sigma}, {out.ocn_mu, out.ocn_log_sigma}},
                        0.1)
            .total;
    };

    Graph g;
    Tensor loss = forward(g);
    params.zero_grad();
    g.backward(loss);

    // Probe a spread of parameters including the coupling projection.
    Rng rng(33);
    auto named = params.named();
    const double h = 1e-5;
    int checked = 0;
    for (auto& [name, t] : named) {  // handles share the parameter storage
        if (!t.has_grad()) continue;
        std::size_t k = rng.next_u64() % t.numel();
        double saved = t.values()[k];
        t.values()[k] = saved + h;
        Graph gp(false);
        double up = forward(gp).scalar();
        t.values()[k] = saved - h;
        Graph gm(false);
        double dn = forward(gm).scalar();
        t.values()[k] = saved;
        double fd = (up - dn) / (2.0 * h);
        double analytic = t.impl_->grad[k];
        CHECK(std::abs(analytic - fd) / std::max(1.0, std::abs(fd)) < 1e-5);
        ++checked;
    }
    CHECK(checked > 50);
}

TEST_CASE("non-finite loss aborts and keeps the last good parameters") {
    CsmParams params = CsmParams::init(mini_config(), 41);
    auto data = toy_trajectories(params, 20, 42);
    TrainConfig tc;
    tc.lr = 1e30;  // guaranteed explosion after a few steps
    tc.steps_single = 50;
    tc.curriculum = {};
    tc.batch = 2;
    tc.seed = 43;
    auto result = fit(params, data, tc);
    CHECK(result.aborted);
    for (const auto& [name, t] : params.named()) {
        for (double v : t.values()) CHECK(std::isfinite(v));
    }
}
