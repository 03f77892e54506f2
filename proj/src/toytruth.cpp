#include "ccast/toytruth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccast/gfb.hpp"
#include "ccast/rng.hpp"

namespace fs = std::filesystem;

namespace ccast {

void ToyConfig::validate() const {
    if (k_ocn < 4) throw DataError("toy: k_ocn must be >= 4");
    if (j_ratio < 1) throw DataError("toy: j_ratio must be >= 1");
    if (!(dt > 0.0)) throw DataError("toy: dt must be positive");
    double steps = 1.0 / dt;
    if (std::abs(steps - std::round(steps)) > 1e-9) {
        throw DataError("toy: dt must divide one day");
    }
    if (nlon != k_atm()) {
        throw DataError("toy: nlon must equal the atmospheric site count " +
                        std::to_string(k_atm()));
    }
    if (!(rate > 0.0) || !(timescale_ratio > 0.0)) {
        throw DataError("toy: rate and timescale_ratio must be positive");
    }
}

ToyState initial_state(const ToyConfig& cfg, std::uint64_t seed) {
    Rng rng(derive_seed(seed, seed_purpose::toy_init, 0));
    ToyState s;
    s.atm.resize(cfg.k_atm());
    s.ocn.resize(cfg.k_ocn);
    for (double& v : s.atm) v = cfg.forcing * 0.5 + rng.normal();
    for (double& v : s.ocn) v = cfg.forcing * 0.5 + rng.normal();
    return s;
}

namespace {

void tendency(const ToyConfig& cfg, const ToyState& s, ToyState& ds) {
    const std::size_t ka = cfg.k_atm();
    const std::size_t ko = cfg.k_ocn;
    const std::size_t j = cfg.j_ratio;
    const double hc = cfg.coupling;

    for (std::size_t k = 0; k < ka; ++k) {
        std::size_t km1 = (k + ka - 1) % ka;
        std::size_t km2 = (k + ka - 2) % ka;
        std::size_t kp1 = (k + 1) % ka;
        double adv = -s.atm[km1] * (s.atm[km2] - s.atm[kp1]) - s.atm[k] + cfg.forcing;
        if (hc != 0.0) adv += hc * s.ocn[k / j];  // skipped entirely at h_c = 0
        ds.atm[k] = cfg.rate * adv;
    }
    const double ocean_rate = cfg.rate / cfg.timescale_ratio;
    for (std::size_t i = 0; i < ko; ++i) {
        std::size_t im1 = (i + ko - 1) % ko;
        std::size_t im2 = (i + ko - 2) % ko;
        std::size_t ip1 = (i + 1) % ko;
        double adv = -s.ocn[im1] * (s.ocn[im2] - s.ocn[ip1]) - s.ocn[i] + cfg.forcing;
        if (hc != 0.0) {
            double sum = 0.0;
            for (std::size_t q = 0; q < j; ++q) sum += s.atm[i * j + q];
            adv += hc / static_cast<double>(j) * sum;
        }
        ds.ocn[i] = ocean_rate * adv;
    }
}

void axpy(ToyState& out, const ToyState& base, const ToyState& d, double a) {
    for (std::size_t k = 0; k < base.atm.size(); ++k) out.atm[k] = base.atm[k] + a * d.atm[k];
    for (std::size_t k = 0; k < base.ocn.size(); ++k) out.ocn[k] = base.ocn[k] + a * d.ocn[k];
}

void rk4_step(const ToyConfig& cfg, ToyState& s, ToyState& k1, ToyState& k2, ToyState& k3,
              ToyState& k4, ToyState& tmp) {
    const double dt = cfg.dt;
    tendency(cfg, s, k1);
    axpy(tmp, s, k1, dt / 2.0);
    tendency(cfg, tmp, k2);
    axpy(tmp, s, k2, dt / 2.0);
    tendency(cfg, tmp, k3);
    axpy(tmp, s, k3, dt);
    tendency(cfg, tmp, k4);
    for (std::size_t k = 0; k < s.atm.size(); ++k) {
        s.atm[k] += dt / 6.0 * (k1.atm[k] + 2.0 * k2.atm[k] + 2.0 * k3.atm[k] + k4.atm[k]);
    }
    for (std::size_t k = 0; k < s.ocn.size(); ++k) {
        s.ocn[k] += dt / 6.0 * (k1.ocn[k] + 2.0 * k2.ocn[k] + 2.0 * k3.ocn[k] + k4.ocn[k]);
    }
}

bool finite_state(const ToyState& s) {
    for (double v : s.atm) {
        if (!std::isfinite(v)) return false;
    }
    for (double v : s.ocn) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace

std::vector<ToyState> integrate(const ToyConfig& cfg, const ToyState& state0, int n_days) {
    cfg.validate();
    if (state0.atm.size() != cfg.k_atm() || state0.ocn.size() != cfg.k_ocn) {
        throw DataError("integrate: state size mismatch");
    }
    if (!finite_state(state0)) throw NumericalError("integrate: non-finite initial state");

    const auto steps_per_day = static_cast<long long>(std::llround(1.0 / cfg.dt));
    std::vector<ToyState> days;
    days.reserve(static_cast<std::size_t>(n_days) + 1);
    ToyState s = state0;
    ToyState k1 = s, k2 = s, k3 = s, k4 = s, tmp = s;
    days.push_back(s);
    for (int d = 1; d <= n_days; ++d) {
        for (long long q = 0; q < steps_per_day; ++q) {
            rk4_step(cfg, s, k1, k2, k3, k4, tmp);
        }
        if (!finite_state(s)) {
            throw NumericalError("integrate: non-finite state at day " + std::to_string(d));
        }
        days.push_back(s);
    }
    return days;
}

namespace {

std::vector<double> row_profile(const ToyConfig& cfg, double base, double span) {
    GridSpec grid = GridSpec::uniform(cfg.nlat, cfg.nlon);
    std::vector<double> amp(cfg.nlat);
    for (std::size_t i = 0; i < cfg.nlat; ++i) {
        amp[i] = base + span * std::cos(grid.lats()[i] * M_PI / 180.0);
    }
    return amp;
}

using Combo = std::vector<std::pair<std::size_t, double>>;

}  // namespace

std::map<VariableId, ObsOperator> make_observation_operators(const ToyConfig& cfg) {
    cfg.validate();
    const std::size_t ka = cfg.k_atm();
    const std::size_t j = cfg.j_ratio;
    auto atm_site = [&](std::size_t col, long long shift) {
        return (col + ka + static_cast<std::size_t>((shift % static_cast<long long>(ka)) +
                                                    static_cast<long long>(ka))) %
               ka;
    };
    auto ocn_site = [&](std::size_t col) { return ka + col / j; };

    std::map<VariableId, ObsOperator> ops;
    auto add = [&](VariableId var, double base, double span, double offset,
                   const std::vector<std::pair<long long, double>>& atm_stencil,
                   double ocn_coef) {
        ObsOperator op;
        op.row_amp = row_profile(cfg, base, span);
        op.offset = offset;
        op.columns.resize(cfg.nlon);
        for (std::size_t col = 0; col < cfg.nlon; ++col) {
            Combo combo;
            for (const auto& [shift, coef] : atm_stencil) {
                combo.emplace_back(atm_site(col, shift), coef);
            }
            if (ocn_coef != 0.0) combo.emplace_back(ocn_site(col), ocn_coef);
            op.columns[col] = std::move(combo);
        }
        ops.emplace(var, std::move(op));
    };

    // Atmosphere: local and stencil reads of the fast ring.
    add(VariableId::T2M, 0.6, 0.4, 10.0, {{0, 1.0}}, 0.0);
    add(VariableId::T2M_MIN, 0.6, 0.4, 8.5, {{0, 1.0}}, 0.0);
    add(VariableId::T2M_MAX, 0.6, 0.4, 11.5, {{0, 1.0}}, 0.0);
    add(VariableId::TP, 0.8, 0.2, 2.0, {{0, 0.6}, {-1, -0.6}}, 0.0);
    add(VariableId::OLR, 0.9, 0.1, 240.0, {{0, -2.0}}, 0.0);
    add(VariableId::Z500, 0.7, 0.3, 500.0, {{-1, 2.0}, {0, 2.0}, {1, 2.0}}, 0.0);
    add(VariableId::MSL, 0.8, 0.2, 1000.0, {{1, 1.5}, {-1, -1.5}}, 0.0);
    add(VariableId::U850, 0.7, 0.3, 0.0, {{0, 0.8}, {-1, 0.5}}, 0.0);
    add(VariableId::U200, 0.7, 0.3, 0.0, {{0, -1.2}, {2, 0.7}}, 0.0);
    // Land: slow-fast blends.
    add(VariableId::SM100, 0.8, 0.2, 20.0, {{0, 0.5}}, 0.8);
    add(VariableId::ST100, 0.8, 0.2, 8.0, {{0, 0.3}}, 0.9);
    // Ocean and sea ice: reads of the slow ring.
    add(VariableId::T300, 0.7, 0.3, 12.0, {}, 1.0);
    add(VariableId::S300, 0.7, 0.3, 35.0, {}, -0.7);
    add(VariableId::MLT, 0.8, 0.2, 50.0, {}, 2.0);
    add(VariableId::SSH, 0.8, 0.2, 0.0, {}, 1.0);
    add(VariableId::SIC, 0.9, 0.1, 0.5, {}, 0.15);
    add(VariableId::SIT, 0.9, 0.1, 1.0, {}, 0.25);
    return ops;
}

Field render_plane(const ToyConfig& cfg, const GridSpec& grid, const ObsOperator& op,
                   const ToyState& state, VariableId var, std::int64_t time) {
    Field f(grid, var, time);
    const std::size_t ka = cfg.k_atm();
    for (std::size_t col = 0; col < grid.nlon(); ++col) {
        double v = op.offset;
        for (const auto& [site, coef] : op.columns[col]) {
            double x = site < ka ? state.atm[site] : state.ocn[site - ka];
            v += coef * x;
        }
        for (std::size_t i = 0; i < grid.nlat(); ++i) {
            f.at(i, col) = op.row_amp[i] * v;
        }
    }
    return f;
}

std::vector<int> init_calendar(int year_days, int inits_per_year) {
    std::vector<int> dates;
    int d = 1;
    bool step3 = true;
    while (static_cast<int>(dates.size()) < inits_per_year) {
        if (d > year_days) {
            throw DataError("init_calendar: " + std::to_string(inits_per_year) +
                            " initializations do not fit in a year");
        }
        dates.push_back(d);
        d += step3 ? 3 : 4;
        step3 = !step3;
    }
    return dates;
}

ToyDataset emit_dataset(const ToyConfig& cfg, int years, int inits_per_year, int horizon,
                        std::uint64_t seed, const std::string& out_dir) {
    cfg.validate();
    if (years < 3) throw DataError("emit_dataset: need >= 3 years");

    if (horizon < 1 || horizon > cfg.year_days) {
        throw DataError("emit_dataset: horizon exceeds the trajectory year");
    }
    const auto calendar = init_calendar(cfg.year_days, inits_per_year);
    // Late-year initializations verify into horizon extra trailing days.
    const int total_days = cfg.spinup_days + years * cfg.year_days + horizon;

    ToyState s0 = initial_state(cfg, seed);
    auto traj = integrate(cfg, s0, total_days);

    GridSpec grid = GridSpec::uniform(cfg.nlat, cfg.nlon);
    auto ops = make_observation_operators(cfg);

    // Global day d (1-based within years) lives at trajectory index
    // spinup_days + d; day 0 is the last spinup day.
    auto state_at = [&](int global_day) -> const ToyState& {
        return traj[static_cast<std::size_t>(cfg.spinup_days + global_day)];
    };

    std::ostringstream manifest;
    manifest << "path,kind,year,date,var\n";

    for (int y = 1; y <= years; ++y) {
        fs::create_directories(fs::path(out_dir) / "truth" / std::to_string(y));
        for (const auto& [var, op] : ops) {
            FieldSeries series;
            for (int d = 1; d <= cfg.year_days; ++d) {
                int global = (y - 1) * cfg.year_days + d;
                series.insert(render_plane(cfg, grid, op, state_at(global), var, global));
            }
            std::string rel = "truth/" + std::to_string(y) + "/" + var_name(var) + ".gfb";
            write_gfb((fs::path(out_dir) / rel).string(), series);
            manifest << rel << ",truth," << y << ",," << var_name(var) << "\n";
        }

        for (int date : calendar) {
            int global = (y - 1) * cfg.year_days + date;
            fs::path dir = fs::path(out_dir) / "inits" / std::to_string(y) / std::to_string(date);
            fs::create_directories(dir);
            for (const auto& [var, op] : ops) {
                FieldSeries init_series;
                init_series.insert(
                    render_plane(cfg, grid, op, state_at(global - 1), var, global - 1));
                init_series.insert(render_plane(cfg, grid, op, state_at(global), var, global));
                std::string rel = "inits/" + std::to_string(y) + "/" + std::to_string(date) +
                                  "/init_" + var_name(var) + ".gfb";
                write_gfb((fs::path(out_dir) / rel).string(), init_series);
                manifest << rel << ",init," << y << "," << date << "," << var_name(var) << "\n";

                FieldSeries obs_series;
                for (int lead = 1; lead <= horizon; ++lead) {
                    obs_series.insert(render_plane(cfg, grid, op, state_at(global + lead), var,
                                                   lead));
                }
                rel = "inits/" + std::to_string(y) + "/" + std::to_string(date) + "/obs_" +
                      var_name(var) + ".gfb";
                write_gfb((fs::path(out_dir) / rel).string(), obs_series);
                manifest << rel << ",obs," << y << "," << date << "," << var_name(var) << "\n";
            }
        }
    }

    std::ofstream mf(fs::path(out_dir) / "manifest.csv");
    if (!mf) throw DataError("emit_dataset: cannot write manifest");
    mf << manifest.str();

    ToyDataset ds;
    ds.grid = grid;
    ds.years = years;
    ds.horizon = horizon;
    ds.calendar = calendar;
    return ds;
}

HindcastSet load_truth_hindcast(const std::string& data_dir, const std::vector<int>& years,
                                const std::vector<VariableId>& vars) {
    HindcastSet set;
    for (int y : years) {
        fs::path ydir = fs::path(data_dir) / "inits" / std::to_string(y);
        if (!fs::exists(ydir)) throw DataError("missing init directory " + ydir.string());
        std::vector<int> dates;
        for (const auto& e : fs::directory_iterator(ydir)) {
            if (e.is_directory()) dates.push_back(std::stoi(e.path().filename().string()));
        }
        std::sort(dates.begin(), dates.end());
        for (int date : dates) {
            HindcastEntry entry;
            entry.year = y;
            entry.init_date = date;
            std::map<VarKey, FieldSeries> member;
            for (VariableId var : vars) {
                fs::path p = ydir / std::to_string(date) / ("obs_" + var_name(var) + ".gfb");
                member[{var, ""}] = read_gfb(p.string());
            }
            entry.members.push_back(std::move(member));
            set.entries.push_back(std::move(entry));
        }
    }
    return set;
}

}  // namespace ccast
