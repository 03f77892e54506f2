#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccast/commands.hpp"
#include "ccast/manifest.hpp"

using namespace ccast;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

/// Small end-to-end configuration: 4 years, 4 inits/year, 21-day horizon.
RunConfig small_cfg() {
    RunConfig cfg = RunConfig::defaults();
    cfg.nlat = 6;  // rows at +-12.9 cover the tropical band, +-38.6/64.3 the NAO box
    cfg.nlon = 16;
    cfg.toy.k_ocn = 4;
    cfg.toy.j_ratio = 4;
    cfg.toy.spinup_days = 60;
    cfg.toy.year_days = 60;
    cfg.years = 4;
    cfg.inits_per_year = 4;
    cfg.horizon = 21;
    cfg.verify_weeks = 3;
    cfg.window_first_day = 8;
    cfg.window_last_day = 21;
    cfg.model.atm_vars = {VariableId::T2M, VariableId::TP, VariableId::OLR,
                          VariableId::Z500, VariableId::MSL, VariableId::U850,
                          VariableId::U200, VariableId::SM100};
    cfg.model.ocn_vars = {VariableId::SSH, VariableId::MLT, VariableId::SIC};
    cfg.model.d_model = 16;
    cfg.model.n_heads = 2;
    cfg.model.blocks_per_stack = 2;
    cfg.model.coupling_every = 2;
    cfg.model.patch = 2;
    cfg.model.ff_mult = 2;
    cfg.model.perturb_hidden = 8;
    cfg.model.ensemble_size = 2;
    cfg.model.rollout_days = 21;
    cfg.finalize();
    return cfg;
}

const fs::path k_root = fs::temp_directory_path() / "ccast_cli_test";

}  // namespace

TEST_CASE("config parsing accepts known keys and rejects unknown ones") {
    RunConfig cfg = RunConfig::parse_text(
        "[grid]\nnlat = 6\nnlon = 24\n\n[toy]\ncoupling = 2.5\n\n"
        "[model]\nd_model = 48\natm_vars = T2M, TP\n\n[verify]\ndetrend = true\n");
    CHECK(cfg.nlat == 6);
    CHECK(cfg.toy.coupling == 2.5);
    CHECK(cfg.model.d_model == 48);
    CHECK(cfg.model.atm_vars == std::vector<VariableId>{VariableId::T2M, VariableId::TP});
    CHECK(cfg.detrend);
    CHECK(cfg.toy.nlat == 6);   // finalize propagates the grid
    CHECK(cfg.model.nlon == 24);

    CHECK_THROWS_AS(RunConfig::parse_text("[grid]\nnope = 3\n"), UsageError);
    CHECK_THROWS_AS(RunConfig::parse_text("[nope]\nnlat = 3\n"), UsageError);
    CHECK_THROWS_AS(RunConfig::parse_text("nlat = 3\n"), UsageError);  // no section
    CHECK_THROWS_AS(RunConfig::parse_text("[grid]\nnlat == 3\n"), UsageError);
    CHECK_THROWS_AS(RunConfig::parse_text("[verify]\ndetrend = maybe\n"), UsageError);
}

TEST_CASE("config serialization is a fixed point of parse") {
    RunConfig cfg = RunConfig::parse_text("[toy]\ncoupling = 2.0\n[model]\nd_model = 24\n");
    std::string one = cfg.serialize();
    RunConfig again = RunConfig::parse_text(one);
    std::string two = again.serialize();
    CHECK(one == two);
    CHECK(again.toy.coupling == cfg.toy.coupling);
    CHECK(again.model.d_model == cfg.model.d_model);
}

TEST_CASE("pipeline: truth, climatology, self-verification") {
    RunConfig cfg = small_cfg();
    fs::remove_all(k_root);
    const std::string data = (k_root / "data").string();
    const std::string clim = (k_root / "clim").string();
    const std::string out = (k_root / "self_verify").string();

    cmd_gen_truth(cfg, 101, data);
    CHECK(fs::exists(fs::path(data) / "manifest.txt"));
    CHECK(fs::exists(fs::path(data) / "truth" / "1" / "T2M.gfb"));

    cmd_build_clim(cfg, data, clim);
    CHECK(fs::exists(fs::path(clim) / "index.csv"));

    // Verifying the observations against themselves: TCC = 1 at all leads.
    cmd_verify(cfg, data, clim, data, clim, out);
    std::ifstream curves(fs::path(out) / "curves.csv");
    REQUIRE(curves);
    std::string line;
    std::getline(curves, line);
    CHECK(line == "metric,variable,lead_week,value");
    int tcc_rows = 0;
    while (std::getline(curves, line)) {
        if (line.rfind("TCC,", 0) == 0) {
            double v = std::stod(line.substr(line.rfind(',') + 1));
            CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
            ++tcc_rows;
        }
        if (line.rfind("RMSE,", 0) == 0) {
            double v = std::stod(line.substr(line.rfind(',') + 1));
            CHECK(v == doctest::Approx(0.0).epsilon(1e-9));
        }
    }
    CHECK(tcc_rows == static_cast<int>(forecast_variables(cfg).size() * cfg.verify_weeks));
}

TEST_CASE("pipeline: forecasts are byte-reproducible for a fixed seed") {
    RunConfig cfg = small_cfg();
    const std::string data = (k_root / "data").string();
    REQUIRE(fs::exists(fs::path(data) / "manifest.txt"));  // previous case ran

    // An untrained (random but well-defined) model is enough for the
    // reproducibility contract.
    const std::string ckpt = (k_root / "model.ckpt").string();
    CsmParams::init(cfg.model, 77).save(ckpt);

    const std::string fc1 = (k_root / "fc1").string();
    const std::string fc2 = (k_root / "fc2").string();
    cmd_forecast(cfg, data, ckpt, {}, 2, 7, false, fc1);
    cmd_forecast(cfg, data, ckpt, {}, 2, 7, false, fc2);
    CHECK(slurp(fs::path(fc1) / "manifest.txt") == slurp(fs::path(fc2) / "manifest.txt"));

    // Member layout exists for the test year only.
    CHECK(fs::exists(fs::path(fc1) / "4" / "1" / "m0" / "T2M.gfb"));
    CHECK(fs::exists(fs::path(fc1) / "4" / "1" / "m1" / "SSH.gfb"));
    CHECK(!fs::exists(fs::path(fc1) / "3"));

    // Single-init selection.
    const std::string fc3 = (k_root / "fc3").string();
    cmd_forecast(cfg, data, ckpt, {{4, 1}}, 1, 7, false, fc3);
    CHECK(fs::exists(fs::path(fc3) / "4" / "1" / "m0" / "T2M.gfb"));
    CHECK(!fs::exists(fs::path(fc3) / "4" / "4"));

    // The control member (m0) of both runs agrees bit for bit.
    CHECK(slurp(fs::path(fc1) / "4" / "1" / "m0" / "T2M.gfb") ==
          slurp(fs::path(fc3) / "4" / "1" / "m0" / "T2M.gfb"));
}

TEST_CASE("pipeline: verify runs on model forecasts and ablation changes them") {
    RunConfig cfg = small_cfg();
    const std::string data = (k_root / "data").string();
    const std::string clim = (k_root / "clim").string();
    const std::string ckpt = (k_root / "model.ckpt").string();
    REQUIRE(fs::exists(ckpt));

    // Give the coupling a nonzero projection so ablation has an effect.
    CsmParams params = CsmParams::load(ckpt);
    Rng rng(5);
    for (auto& cp : params.coupling) {
        for (auto& v : cp.out.w.values()) v = 0.02 * rng.normal();
    }
    const std::string ckpt2 = (k_root / "model2.ckpt").string();
    params.save(ckpt2);

    const std::string fc = (k_root / "fc_model").string();
    const std::string fca = (k_root / "fc_ablated").string();
    cmd_forecast(cfg, data, ckpt2, {}, 2, 9, false, fc);
    cmd_forecast(cfg, data, ckpt2, {}, 2, 9, true, fca);
    CHECK(slurp(fs::path(fc) / "4" / "1" / "m0" / "T2M.gfb") !=
          slurp(fs::path(fca) / "4" / "1" / "m0" / "T2M.gfb"));

    const std::string v1 = (k_root / "verify_model").string();
    const std::string v2 = (k_root / "verify_ablated").string();
    cmd_verify(cfg, data, clim, fc, clim, v1);
    cmd_verify(cfg, data, clim, fca, clim, v2);
    CHECK(fs::exists(fs::path(v1) / "maps" / "rpss_T2M_w1.gfb"));
    CHECK(fs::exists(fs::path(v1) / "maps" / "bss_SSH_w3-6.gfb") == false);
    CHECK(fs::exists(fs::path(v1) / "maps" / "tcc_SSH_w3-6.gfb"));

    // report merges the two curve tables and is a pure function.
    const std::string rep1 = (k_root / "report1").string();
    const std::string rep2 = (k_root / "report2").string();
    cmd_report(v1, v2, rep1);
    cmd_report(v1, v2, rep2);
    CHECK(slurp(fs::path(rep1) / "summary.csv") == slurp(fs::path(rep2) / "summary.csv"));
    std::string summary = slurp(fs::path(rep1) / "summary.csv");
    CHECK(summary.rfind("metric,variable,lead_week,coupled,ablated,difference", 0) == 0);
    CHECK(summary.find("TCC,T2M,1,") != std::string::npos);
}

TEST_CASE("pipeline: mjo command emits index skill tables") {
    RunConfig cfg = small_cfg();
    const std::string data = (k_root / "data").string();
    const std::string clim = (k_root / "clim").string();
    const std::string out = (k_root / "mjo_self").string();

    // Observations as forecasts: perfect index skill, horizon = full length.
    cmd_mjo(cfg, data, clim, data, clim, out);
    std::string skill = slurp(fs::path(out) / "skill.csv");
    std::istringstream is(skill);
    std::string line;
    std::getline(is, line);
    CHECK(line == "index,horizon_days");
    int rmm_h = -1, nao_h = -1;
    while (std::getline(is, line)) {
        if (line.rfind("RMM,", 0) == 0) rmm_h = std::stoi(line.substr(4));
        if (line.rfind("NAO,", 0) == 0) nao_h = std::stoi(line.substr(4));
    }
    // Forecast == observation gives COR 1 wherever defined; the horizon is
    // capped by the last lead that still verifies inside the test year.
    CHECK(rmm_h >= cfg.horizon - 1);
    CHECK(nao_h >= cfg.horizon - 1);

    CHECK(fs::exists(fs::path(out) / "rmm_forecast.csv"));
    std::string fc_csv = slurp(fs::path(out) / "rmm_forecast.csv");
    CHECK(fc_csv.rfind("init_date,lead_day,rmm1,rmm2,amplitude,phase", 0) == 0);
    CHECK(fs::exists(fs::path(out) / "basis" / "rmm_variance.csv"));
    CHECK(fs::exists(fs::path(out) / "basis" / "nao_eof1.gfb"));
}

TEST_CASE("pipeline: couple-diag emits correlation maps and a summary") {
    RunConfig cfg = small_cfg();
    const std::string data = (k_root / "data").string();
    const std::string clim = (k_root / "clim").string();
    const std::string out = (k_root / "cd_self").string();

    cmd_couple_diag(cfg, data, clim, data, clim, out);
    CHECK(fs::exists(fs::path(out) / "maps" / "cor_SM100-TP_obs.gfb"));
    CHECK(fs::exists(fs::path(out) / "maps" / "sig_SIC-MSL_forecast.gfb"));
    std::string summary = slurp(fs::path(out) / "coupling.csv");
    CHECK(summary.rfind("pair,source,frac_significant,pattern_cor", 0) == 0);
    // Observations as forecasts: the forecast map equals the observed map,
    // so the pattern correlation is 1.
    std::istringstream is(summary);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        if (line.find(",forecast,") != std::string::npos) {
            double pc = std::stod(line.substr(line.rfind(',') + 1));
            CHECK(pc == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("manifest digests change when content changes") {
    fs::path dir = k_root / "manifest_check";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "a.txt") << "hello";
    write_manifest(dir.string());
    std::string m1 = slurp(dir / "manifest.txt");
    CHECK(m1.find("a.txt") != std::string::npos);
    std::ofstream(dir / "a.txt") << "world";
    write_manifest(dir.string());
    CHECK(slurp(dir / "manifest.txt") != m1);
    // Known digest of "hello".
    CHECK(m1.rfind("2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824", 0) ==
          0);
}
