#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccast/gfb.hpp"
#include "ccast/toytruth.hpp"

using namespace ccast;
namespace fs = std::filesystem;

namespace {

ToyConfig small_cfg() {
    ToyConfig c;
    c.k_ocn = 8;
    c.j_ratio = 4;
    c.nlat = 4;
    c.nlon = 32;
    return c;
}

double state_rms_diff(const ToyState& a, const ToyState& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.atm.size(); ++k) {
        s += (a.atm[k] - b.atm[k]) * (a.atm[k] - b.atm[k]);
    }
    return std::sqrt(s / a.atm.size());
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("zero forcing and zero coupling hold the origin fixed") {
    ToyConfig cfg = small_cfg();
    cfg.forcing = 0.0;
    cfg.coupling = 0.0;
    ToyState s0;
    s0.atm.assign(cfg.k_atm(), 0.0);
    s0.ocn.assign(cfg.k_ocn, 0.0);
    auto traj = integrate(cfg, s0, 5);
    for (const auto& day : traj) {
        for (double v : day.atm) CHECK(v == 0.0);
        for (double v : day.ocn) CHECK(v == 0.0);
    }
}

TEST_CASE("decoupled atmosphere is bitwise independent of the ocean state") {
    ToyConfig cfg = small_cfg();
    cfg.coupling = 0.0;
    ToyState a = initial_state(cfg, 1);
    ToyState b = a;
    for (auto& v : b.ocn) v += 3.7;  // different ocean, same atmosphere
    auto ta = integrate(cfg, a, 20);
    auto tb = integrate(cfg, b, 20);
    for (std::size_t d = 0; d < ta.size(); ++d) {
        for (std::size_t k = 0; k < cfg.k_atm(); ++k) {
            CHECK(ta[d].atm[k] == tb[d].atm[k]);
        }
    }
}

TEST_CASE("tiny perturbations grow past O(1) within 30 days") {
    ToyConfig cfg = small_cfg();
    // Spin up onto the attractor first.
    ToyState s0 = integrate(cfg, initial_state(cfg, 2), 200).back();
    ToyState s1 = s0;
    s1.atm[0] += 1e-8;
    auto ta = integrate(cfg, s0, 30);
    auto tb = integrate(cfg, s1, 30);
    CHECK(state_rms_diff(ta.back(), tb.back()) > 1.0);
    // And it grows, not just jumps: halfway should already exceed the seed.
    CHECK(state_rms_diff(ta[15], tb[15]) > 1e-6);
}

TEST_CASE("RK4 error scales like dt^4") {
    ToyConfig cfg = small_cfg();
    ToyState s0 = integrate(cfg, initial_state(cfg, 3), 50).back();

    auto run = [&](double dt) {
        ToyConfig c = cfg;
        c.dt = dt;
        return integrate(c, s0, 10).back();
    };
    ToyState x1 = run(0.02);
    ToyState x2 = run(0.01);
    ToyState x4 = run(0.005);
    double e1 = state_rms_diff(x1, x2);
    double e2 = state_rms_diff(x2, x4);
    double ratio = e1 / e2;
    CHECK(ratio > 8.0);   // nominal 16, within a factor of 2
    CHECK(ratio < 32.0);
}

TEST_CASE("non-finite states are reported with the day") {
    ToyConfig cfg = small_cfg();
    ToyState s0;
    // A lone huge site overflows the quadratic advection immediately (a
    // uniform huge state would cancel it and decay instead).
    s0.atm.assign(cfg.k_atm(), 0.0);
    s0.atm[0] = 1e200;
    s0.ocn.assign(cfg.k_ocn, 0.0);
    CHECK_THROWS_AS(integrate(cfg, s0, 5), NumericalError);
}

TEST_CASE("identity observation operator reads one site") {
    ToyConfig cfg = small_cfg();
    GridSpec grid = GridSpec::uniform(cfg.nlat, cfg.nlon);
    ObsOperator op;
    op.row_amp.assign(cfg.nlat, 1.0);
    op.offset = 0.0;
    op.columns.resize(cfg.nlon);
    op.columns[5] = {{5, 1.0}};  // column 5 reads atmospheric site 5
    ToyState s = initial_state(cfg, 4);
    Field f = render_plane(cfg, grid, op, s, VariableId::T2M, 0);
    for (std::size_t i = 0; i < cfg.nlat; ++i) {
        CHECK(f.at(i, 5) == s.atm[5]);
        CHECK(f.at(i, 6) == 0.0);
    }
}

TEST_CASE("the initialization calendar alternates 3- and 4-day gaps") {
    auto cal = init_calendar(360, 8);
    std::vector<int> expect = {1, 4, 8, 11, 15, 18, 22, 25};
    CHECK(cal == expect);
    CHECK_THROWS_AS(init_calendar(20, 10), DataError);
}

TEST_CASE("emit_dataset is deterministic and the files satisfy the format") {
    ToyConfig cfg = small_cfg();
    cfg.spinup_days = 30;
    cfg.year_days = 40;
    fs::path dir1 = fs::temp_directory_path() / "ccast_toy_a";
    fs::path dir2 = fs::temp_directory_path() / "ccast_toy_b";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    ToyDataset ds = emit_dataset(cfg, 3, 2, 10, 42, dir1.string());
    emit_dataset(cfg, 3, 2, 10, 42, dir2.string());
    CHECK(ds.years == 3);
    CHECK(ds.calendar == std::vector<int>{1, 4});

    // Determinism: identical bytes.
    for (const auto& rel : {"truth/1/T2M.gfb", "inits/2/4/obs_SSH.gfb", "manifest.csv"}) {
        CHECK(slurp(dir1 / rel) == slurp(dir2 / rel));
    }

    // Emitted files obey the container invariants on re-read.
    auto t2m = read_gfb((dir1 / "truth" / "1" / "T2M.gfb").string());
    CHECK(t2m.size() == 40);
    CHECK(t2m.grid().nlat() == cfg.nlat);
    auto times = t2m.times();
    for (std::size_t i = 1; i < times.size(); ++i) CHECK(times[i] > times[i - 1]);
    for (std::int64_t t : times) {
        for (double v : t2m.at(t).values) CHECK(std::isfinite(v));
    }
    auto obs = read_gfb((dir1 / "inits" / "1" / "4" / "obs_TP.gfb").string());
    CHECK(obs.size() == 10);
    CHECK(obs.times().front() == 1);  // lead-day indexing
    auto init = read_gfb((dir1 / "inits" / "1" / "4" / "init_TP.gfb").string());
    CHECK(init.size() == 2);

    // Bad horizon.
    CHECK_THROWS_AS(emit_dataset(cfg, 3, 2, 100, 42, dir1.string()), DataError);
    // Too few years.
    CHECK_THROWS_AS(emit_dataset(cfg, 2, 2, 10, 42, dir1.string()), DataError);
}

TEST_CASE("emitted observations align with the truth trajectory") {
    ToyConfig cfg = small_cfg();
    cfg.spinup_days = 25;
    cfg.year_days = 30;
    fs::path dir = fs::temp_directory_path() / "ccast_toy_align";
    fs::remove_all(dir);
    emit_dataset(cfg, 3, 2, 8, 7, dir.string());
    // obs lead ell of init (y=1, d=4) equals truth day 4+ell of year 1.
    auto truth = read_gfb((dir / "truth" / "1" / "SSH.gfb").string());
    auto obs = read_gfb((dir / "inits" / "1" / "4" / "obs_SSH.gfb").string());
    for (int lead = 1; lead <= 8; ++lead) {
        int global = 4 + lead;
        if (global > 30) break;
        const Field& a = obs.at(lead);
        const Field& b = truth.at(global);
        for (std::size_t k = 0; k < a.values.size(); ++k) {
            CHECK(a.values[k] == b.values[k]);
        }
    }
}

TEST_CASE("coupling raises the lagged ocean-to-atmosphere correlation") {
    // Monte-Carlo estimate over hundreds of segments: with strong coupling
    // the ocean state predicts its atmospheric block's later window mean;
    // decoupled it cannot.
    auto lagged_cor = [](double hc) {
        ToyConfig cfg;
        cfg.k_ocn = 8;
        cfg.j_ratio = 4;
        cfg.nlat = 4;
        cfg.nlon = 32;
        cfg.coupling = hc;
        ToyState s = integrate(cfg, initial_state(cfg, 7), 100).back();
        const int segments = 400;
        const int spacing = 6;
        std::vector<double> x, y;
        auto traj = integrate(cfg, s, segments * spacing + 11);
        for (int seg = 0; seg < segments; ++seg) {
            int t0 = seg * spacing;
            x.push_back(traj[t0].ocn[3]);
            // Window mean over the block this ocean site forces.
            double block = 0.0;
            int n = 0;
            for (int t = t0 + 1; t <= t0 + 10; ++t) {
                for (std::size_t q = 0; q < cfg.j_ratio; ++q) {
                    block += traj[t].atm[3 * cfg.j_ratio + q];
                    ++n;
                }
            }
            y.push_back(block / n);
        }
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            mx += x[i];
            my += y[i];
        }
        mx /= x.size();
        my /= y.size();
        double sxy = 0.0, sxx = 0.0, syy = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx) * (x[i] - mx);
            syy += (y[i] - my) * (y[i] - my);
        }
        return sxy / std::sqrt(sxx * syy);
    };
    double with = lagged_cor(2.0);
    double without = lagged_cor(0.0);
    CHECK(with > without + 0.1);
    CHECK(with > 0.15);
}

TEST_CASE("hindcast loader mirrors the emitted observations") {
    ToyConfig cfg = small_cfg();
    cfg.spinup_days = 20;
    cfg.year_days = 30;
    fs::path dir = fs::temp_directory_path() / "ccast_toy_hind";
    fs::remove_all(dir);
    emit_dataset(cfg, 3, 2, 8, 13, dir.string());
    auto set = load_truth_hindcast(dir.string(), {1, 2}, {VariableId::T2M, VariableId::SSH});
    CHECK(set.entries.size() == 4);  // 2 years x 2 dates
    for (const auto& e : set.entries) {
        CHECK(e.members.size() == 1);
        CHECK(e.members[0].count({VariableId::T2M, ""}) == 1);
        CHECK(e.members[0].at({VariableId::SSH, ""}).size() == 8);
    }
}
