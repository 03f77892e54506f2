#include "ccast/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ccast/gfb.hpp"
#include "ccast/manifest.hpp"
#include "ccast/modes.hpp"
#include "ccast/verify.hpp"

namespace fs = std::filesystem;

namespace ccast {

namespace {

std::vector<int> hindcast_years(const RunConfig& cfg) {
    std::vector<int> years;
    for (int y = 1; y < cfg.years; ++y) years.push_back(y);
    return years;
}

int test_year(const RunConfig& cfg) { return cfg.years; }

std::vector<int> numeric_subdirs(const fs::path& dir) {
    std::vector<int> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_directory()) continue;
        const std::string name = e.path().filename().string();
        if (!name.empty() && std::all_of(name.begin(), name.end(), ::isdigit)) {
            out.push_back(std::stoi(name));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::ofstream open_csv(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path.string());
    os.precision(12);
    return os;
}

}  // namespace

std::vector<VariableId> forecast_variables(const RunConfig& cfg) {
    std::vector<VariableId> vars = cfg.model.atm_vars;
    vars.insert(vars.end(), cfg.model.ocn_vars.begin(), cfg.model.ocn_vars.end());
    return vars;
}

std::vector<InitKey> list_inits(const std::string& dir) {
    std::vector<InitKey> out;
    fs::path root(dir);
    // Either a forecast layout ({year}/{date}) or a dataset (inits/{year}/{date}).
    if (fs::exists(root / "inits")) root /= "inits";
    for (int y : numeric_subdirs(root)) {
        for (int d : numeric_subdirs(root / std::to_string(y))) {
            out.push_back({y, d});
        }
    }
    return out;
}

std::vector<FieldSeries> load_forecast_members(const std::string& forecast_dir, int year,
                                               int date, VariableId var) {
    fs::path base = fs::path(forecast_dir) / std::to_string(year) / std::to_string(date);
    std::vector<FieldSeries> members;
    if (fs::exists(base)) {
        for (std::size_t m = 0;; ++m) {
            fs::path p = base / ("m" + std::to_string(m)) / (var_name(var) + ".gfb");
            if (!fs::exists(p)) break;
            members.push_back(read_gfb(p.string()));
        }
    }
    if (members.empty()) {
        // Dataset layout: the observations stand in as a one-member forecast.
        fs::path p = fs::path(forecast_dir) / "inits" / std::to_string(year) /
                     std::to_string(date) / ("obs_" + var_name(var) + ".gfb");
        if (fs::exists(p)) members.push_back(read_gfb(p.string()));
    }
    if (members.empty()) {
        throw DataError("no forecast members for " + var_name(var) + " at year " +
                        std::to_string(year) + " date " + std::to_string(date) + " under " +
                        forecast_dir);
    }
    return members;
}

FieldSeries ensemble_mean(const std::vector<FieldSeries>& members) {
    if (members.empty()) throw DataError("ensemble_mean: no members");
    FieldSeries out;
    for (const auto& [t, f] : members.front().entries()) {
        Field acc = f;
        for (std::size_t m = 1; m < members.size(); ++m) {
            acc = field_add(acc, members[m].at(t));
        }
        out.insert(field_scale(acc, 1.0 / static_cast<double>(members.size())));
    }
    return out;
}

StepInputFields load_init_fields(const RunConfig& cfg, const std::string& data_dir, int year,
                                 int date) {
    fs::path dir = fs::path(data_dir) / "inits" / std::to_string(year) / std::to_string(date);
    StepInputFields in;
    auto load_sphere = [&](const std::vector<VariableId>& vars, std::vector<Field>& prev,
                           std::vector<Field>& cur) {
        for (VariableId v : vars) {
            auto series = read_gfb((dir / ("init_" + var_name(v) + ".gfb")).string());
            auto times = series.times();
            if (times.size() != 2) {
                throw DataError("init file for " + var_name(v) + " must hold two days");
            }
            prev.push_back(series.at(times[0]));
            cur.push_back(series.at(times[1]));
        }
    };
    load_sphere(cfg.model.atm_vars, in.atm_prev, in.atm_cur);
    load_sphere(cfg.model.ocn_vars, in.ocn_prev, in.ocn_cur);
    return in;
}

void cmd_gen_truth(const RunConfig& cfg, std::uint64_t seed, const std::string& out) {
    RunConfig c = cfg;
    c.finalize();
    emit_dataset(c.toy, c.years, c.inits_per_year, c.horizon, seed, out);
    write_manifest(out);
}

void cmd_build_clim(const RunConfig& cfg, const std::string& data_dir, const std::string& out) {
    RunConfig c = cfg;
    c.finalize();
    auto hindcast =
        load_truth_hindcast(data_dir, hindcast_years(c), forecast_variables(c));
    ClimatologyOptions opts;
    opts.weeks = c.verify_weeks;
    Climatology clim = build_climatology(hindcast, opts);
    clim.save(out);
    write_manifest(out);
}

void cmd_train(const RunConfig& cfg, const std::string& data_dir, std::uint64_t seed,
               const std::string& out) {
    RunConfig c = cfg;
    c.finalize();
    fs::create_directories(out);

    CsmParams params = CsmParams::init(c.model, seed);

    // Trajectories: one per training year, planes ordered per sphere lists.
    std::vector<std::vector<std::vector<Field>>> atm_trajs, ocn_trajs;
    for (int y = 1; y <= std::min(c.train_years_end, c.years); ++y) {
        std::map<VariableId, FieldSeries> series;
        for (VariableId v : forecast_variables(c)) {
            fs::path p = fs::path(data_dir) / "truth" / std::to_string(y) /
                         (var_name(v) + ".gfb");
            series.emplace(v, read_gfb(p.string()));
        }
        std::vector<std::vector<Field>> atm_days, ocn_days;
        const auto times = series.begin()->second.times();
        for (std::int64_t t : times) {
            std::vector<Field> a, o;
            for (VariableId v : c.model.atm_vars) a.push_back(series.at(v).at(t));
            for (VariableId v : c.model.ocn_vars) o.push_back(series.at(v).at(t));
            atm_days.push_back(std::move(a));
            ocn_days.push_back(std::move(o));
        }
        atm_trajs.push_back(std::move(atm_days));
        ocn_trajs.push_back(std::move(ocn_days));
    }

    auto data = prepare_training_data(params, atm_trajs, ocn_trajs);
    TrainConfig tc = c.train;
    tc.seed = seed;
    tc.ckpt_path = (fs::path(out) / "model.ckpt").string();
    auto result = fit(params, data, tc);
    write_trace_csv((fs::path(out) / "trace.csv").string(), result.trace);
    if (result.aborted) {
        write_manifest(out);
        throw NumericalError("training aborted on non-finite loss; last good checkpoint kept");
    }
    write_manifest(out);
}

void cmd_forecast(const RunConfig& cfg, const std::string& data_dir, const std::string& ckpt,
                  const std::vector<InitKey>& inits, std::size_t members, std::uint64_t seed,
                  bool ablate_coupling, const std::string& out) {
    RunConfig c = cfg;
    c.finalize();
    CsmParams params = CsmParams::load(ckpt);
    CsmModel model(params);

    std::vector<InitKey> keys = inits;
    if (keys.empty()) {
        for (const auto& k : list_inits(data_dir)) {
            if (k.year == test_year(c)) keys.push_back(k);
        }
    }
    if (keys.empty()) throw DataError("forecast: no initializations found");

    for (const auto& key : keys) {
        auto in = load_init_fields(c, data_dir, key.year, key.date);
        auto ens = model.ensemble_forecast(in, members, seed, ablate_coupling);
        for (std::size_t m = 0; m < ens.members.size(); ++m) {
            fs::path dir = fs::path(out) / std::to_string(key.year) /
                           std::to_string(key.date) / ("m" + std::to_string(m));
            fs::create_directories(dir);
            for (const auto& [var, series] : ens.members[m].vars) {
                write_gfb((dir / (var_name(var) + ".gfb")).string(), series);
            }
        }
    }
    write_manifest(out);
}

namespace {

struct InitAnomalies {
    FieldSeries ens_mean;               ///< ensemble-mean anomaly series
    std::vector<FieldSeries> members;   ///< per-member anomaly series
    FieldSeries obs;                    ///< observed anomaly series
};

FieldSeries subtract_daily_mean(const FieldSeries& raw, const Climatology& clim, int date) {
    return anomaly(raw, clim, date);
}

}  // namespace

void cmd_verify(const RunConfig& cfg, const std::string& data_dir, const std::string& clim_dir,
                const std::string& forecast_dir, const std::string& forecast_clim_dir,
                const std::string& out) {
    RunConfig c = cfg;
    c.finalize();
    Climatology clim_obs = Climatology::load(clim_dir);
    Climatology clim_fc = forecast_clim_dir == clim_dir || forecast_clim_dir.empty()
                              ? clim_obs
                              : Climatology::load(forecast_clim_dir);

    std::vector<InitKey> keys;
    for (const auto& k : list_inits(forecast_dir)) {
        if (k.year == test_year(c)) keys.push_back(k);
    }
    if (keys.size() < 2) throw DataError("verify: need >= 2 initializations of the test year");

    const int weeks = c.verify_weeks;
    std::ostringstream curves;
    curves << "metric,variable,lead_week,value\n";
    curves.precision(12);
    fs::create_directories(fs::path(out) / "maps");

    for (VariableId var : forecast_variables(c)) {
        VarKey vkey{var, ""};
        // Collect per-init anomaly series once.
        std::vector<InitAnomalies> inits;
        for (const auto& key : keys) {
            InitAnomalies ia;
            fs::path obs_path = fs::path(data_dir) / "inits" / std::to_string(key.year) /
                                std::to_string(key.date) / ("obs_" + var_name(var) + ".gfb");
            ia.obs = subtract_daily_mean(read_gfb(obs_path.string()), clim_obs, key.date);
            auto members = load_forecast_members(forecast_dir, key.year, key.date, var);
            for (auto& m : members) {
                ia.members.push_back(subtract_daily_mean(m, clim_fc, key.date));
            }
            ia.ens_mean = ensemble_mean(ia.members);
            inits.push_back(std::move(ia));
        }
        const std::size_t n_members = inits.front().members.size();

        struct WeekJob {
            int week;       ///< 0 = the 3-6 week window
            int day_first;
            int day_last;
        };
        std::vector<WeekJob> jobs;
        for (int w = 1; w <= weeks; ++w) jobs.push_back({w, 7 * (w - 1) + 1, 7 * w});
        jobs.push_back({0, c.window_first_day, c.window_last_day});

        for (const auto& job : jobs) {
            MatchedSample sample;
            std::vector<std::vector<Field>> member_fields(keys.size());
            for (std::size_t j = 0; j < inits.size(); ++j) {
                sample.pred.push_back(
                    window_mean(inits[j].ens_mean, job.day_first, job.day_last));
                sample.obs.push_back(window_mean(inits[j].obs, job.day_first, job.day_last));
                for (const auto& m : inits[j].members) {
                    member_fields[j].push_back(window_mean(m, job.day_first, job.day_last));
                }
            }

            if (c.detrend) {
                // Per-point trend over hindcast years at the same init date,
                // removed from both sides (needs hindcast-year forecasts).
                std::vector<int> hyears = hindcast_years(c);
                for (std::size_t j = 0; j < keys.size(); ++j) {
                    std::vector<Field> pred_hist, obs_hist;
                    for (int hy : hyears) {
                        fs::path obs_path = fs::path(data_dir) / "inits" /
                                            std::to_string(hy) / std::to_string(keys[j].date) /
                                            ("obs_" + var_name(var) + ".gfb");
                        auto obs_anom = subtract_daily_mean(read_gfb(obs_path.string()),
                                                            clim_obs, keys[j].date);
                        obs_hist.push_back(
                            window_mean(obs_anom, job.day_first, job.day_last));
                        auto members =
                            load_forecast_members(forecast_dir, hy, keys[j].date, var);
                        std::vector<FieldSeries> manoms;
                        for (auto& m : members) {
                            manoms.push_back(subtract_daily_mean(m, clim_fc, keys[j].date));
                        }
                        pred_hist.push_back(
                            window_mean(ensemble_mean(manoms), job.day_first, job.day_last));
                    }
                    auto [dp, dob] = detrend_fields(hyears, pred_hist, obs_hist,
                                                    test_year(c), sample.pred[j],
                                                    sample.obs[j]);
                    sample.pred[j] = std::move(dp);
                    sample.obs[j] = std::move(dob);
                }
            }

            MetricMap tcc_map = tcc(sample);
            tcc_map.lead_week = job.week;
            MetricMap rmse_map = rmse(sample);
            rmse_map.lead_week = job.week;

            auto map_path = [&](const std::string& metric) {
                std::string lead = job.week == 0 ? "w3-6" : "w" + std::to_string(job.week);
                return fs::path(out) / "maps" /
                       (metric + "_" + var_name(var) + "_" + lead + ".gfb");
            };
            auto write_map = [&](const MetricMap& m, const std::string& metric) {
                FieldSeries s;
                s.insert(metric_to_field(m, var));
                write_gfb(map_path(metric).string(), s);
            };
            write_map(tcc_map, "tcc");
            write_map(rmse_map, "rmse");
            if (job.week > 0) {
                curves << "TCC," << var_name(var) << "," << job.week << ","
                       << latitude_weighted_mean(metric_to_field(tcc_map, var)) << "\n";
                curves << "RMSE," << var_name(var) << "," << job.week << ","
                       << latitude_weighted_mean(metric_to_field(rmse_map, var)) << "\n";
            }

            // Probabilistic and extreme scores need real ensembles and
            // weekly climatological thresholds.
            if (n_members >= 2 && job.week >= 1) {
                const auto& wk_obs = clim_obs.weekly(keys.front().date, job.week, vkey);
                (void)wk_obs;
                std::vector<CategoryProbs> f_probs, o_probs, fx_probs, ox_probs;
                for (std::size_t j = 0; j < keys.size(); ++j) {
                    const auto& cw_obs = clim_obs.weekly(keys[j].date, job.week, vkey);
                    const auto& cw_fc = clim_fc.weekly(keys[j].date, job.week, vkey);
                    // Tercile boundaries in anomaly space.
                    std::vector<Field> thr_obs = {
                        field_sub(cw_obs.percentiles.at(Pct::p33), cw_obs.mean),
                        field_sub(cw_obs.percentiles.at(Pct::p67), cw_obs.mean)};
                    std::vector<Field> thr_fc = {
                        field_sub(cw_fc.percentiles.at(Pct::p33), cw_fc.mean),
                        field_sub(cw_fc.percentiles.at(Pct::p67), cw_fc.mean)};
                    f_probs.push_back(category_probs(member_fields[j], thr_fc));
                    o_probs.push_back(observed_probs(sample.obs[j], thr_obs));
                    std::vector<Field> xthr_obs = {
                        field_sub(cw_obs.percentiles.at(Pct::p90), cw_obs.mean)};
                    std::vector<Field> xthr_fc = {
                        field_sub(cw_fc.percentiles.at(Pct::p90), cw_fc.mean)};
                    fx_probs.push_back(category_probs(member_fields[j], xthr_fc));
                    ox_probs.push_back(observed_probs(sample.obs[j], xthr_obs));
                }
                const GridSpec& grid = sample.pred.front().grid;
                MetricMap rpss_map =
                    rpss(f_probs, o_probs, climatological_probs(grid, 3), job.week);
                MetricMap bss_map =
                    bss(fx_probs, ox_probs, climatological_probs(grid, 2), job.week);
                write_map(rpss_map, "rpss");
                write_map(bss_map, "bss");
                curves << "RPSS," << var_name(var) << "," << job.week << ","
                       << latitude_weighted_mean(metric_to_field(rpss_map, var)) << "\n";
                curves << "BSS," << var_name(var) << "," << job.week << ","
                       << latitude_weighted_mean(metric_to_field(bss_map, var)) << "\n";
            }
        }
    }

    std::ofstream os(fs::path(out) / "curves.csv");
    if (!os) throw DataError("cannot write curves.csv");
    os << curves.str();
    os.close();
    write_manifest(out);
}

namespace {

/// Day-of-year climatological mean of the truth over hindcast years.
std::map<int, Field> doy_climatology(const std::string& data_dir, const std::vector<int>& years,
                                     VariableId var, int year_days) {
    std::map<int, Field> mean;
    for (int y : years) {
        fs::path p = fs::path(data_dir) / "truth" / std::to_string(y) /
                     (var_name(var) + ".gfb");
        auto series = read_gfb(p.string());
        int d = 0;
        for (const auto& [t, f] : series.entries()) {
            ++d;
            auto it = mean.find(d);
            if (it == mean.end()) {
                mean.emplace(d, f);
            } else {
                it->second = field_add(it->second, f);
            }
        }
        if (d != year_days) throw DataError("truth year length mismatch");
    }
    for (auto& [d, f] : mean) f = field_scale(f, 1.0 / static_cast<double>(years.size()));
    return mean;
}

std::vector<Field> truth_anomaly_days(const std::string& data_dir, int year, VariableId var,
                                      const std::map<int, Field>& doy_mean) {
    fs::path p = fs::path(data_dir) / "truth" / std::to_string(year) /
                 (var_name(var) + ".gfb");
    auto series = read_gfb(p.string());
    std::vector<Field> out;
    int d = 0;
    for (const auto& [t, f] : series.entries()) {
        ++d;
        Field a = field_sub(f, doy_mean.at(d));
        a.time = d;  // day-of-year, the axis init dates live on
        out.push_back(std::move(a));
    }
    return out;
}

}  // namespace

void cmd_mjo(const RunConfig& cfg, const std::string& data_dir, const std::string& clim_dir,
             const std::string& forecast_dir, const std::string& forecast_clim_dir,
             const std::string& out) {
    RunConfig c = cfg;
    c.finalize();
    fs::create_directories(out);
    Climatology clim_obs = Climatology::load(clim_dir);
    Climatology clim_fc = forecast_clim_dir == clim_dir || forecast_clim_dir.empty()
                              ? clim_obs
                              : Climatology::load(forecast_clim_dir);

    const std::vector<VariableId> rmm_vars = {VariableId::OLR, VariableId::U850,
                                              VariableId::U200};
    const auto hyears = hindcast_years(c);
    const int ty = test_year(c);

    // RMM basis on pooled hindcast daily anomalies.
    std::vector<std::vector<Field>> pooled(rmm_vars.size());
    std::vector<std::map<int, Field>> doy(rmm_vars.size());
    for (std::size_t v = 0; v < rmm_vars.size(); ++v) {
        doy[v] = doy_climatology(data_dir, hyears, rmm_vars[v], c.toy.year_days);
        for (int y : hyears) {
            auto days = truth_anomaly_days(data_dir, y, rmm_vars[v], doy[v]);
            pooled[v].insert(pooled[v].end(), days.begin(), days.end());
        }
    }
    RmmBasis rmm_basis = fit_rmm_basis(pooled);
    GridSpec grid = pooled[0].front().grid;
    rmm_basis.save((fs::path(out) / "basis").string(), grid, rmm_vars);

    // Observed test-year series.
    std::vector<FieldSeries> obs_series(rmm_vars.size());
    for (std::size_t v = 0; v < rmm_vars.size(); ++v) {
        for (auto& f : truth_anomaly_days(data_dir, ty, rmm_vars[v], doy[v])) {
            obs_series[v].insert(std::move(f));
        }
    }
    RmmSeries obs_rmm = rmm({&obs_series[0], &obs_series[1], &obs_series[2]}, rmm_basis);
    {
        auto os = open_csv(fs::path(out) / "rmm_obs.csv");
        os << "day,rmm1,rmm2,amplitude,phase\n";
        for (const auto& p : obs_rmm) {
            os << p.time << "," << p.rmm1 << "," << p.rmm2 << "," << p.amplitude() << ","
               << p.phase() << "\n";
        }
    }

    // Forecast series per init; observed counterpart aligned by lead day.
    std::vector<InitKey> keys;
    for (const auto& k : list_inits(forecast_dir)) {
        if (k.year == ty) keys.push_back(k);
    }
    if (keys.empty()) throw DataError("mjo: no test-year forecasts found");

    std::map<int, const RmmPoint*> obs_by_day;
    for (const auto& p : obs_rmm) obs_by_day[static_cast<int>(p.time)] = &p;

    int horizon = c.horizon;
    std::vector<std::vector<RmmPoint>> fc_at_lead(horizon + 1), obs_at_lead(horizon + 1);
    auto fc_csv = open_csv(fs::path(out) / "rmm_forecast.csv");
    fc_csv << "init_date,lead_day,rmm1,rmm2,amplitude,phase\n";
    for (const auto& key : keys) {
        std::vector<FieldSeries> fc_anoms;
        for (VariableId var : rmm_vars) {
            auto members = load_forecast_members(forecast_dir, key.year, key.date, var);
            std::vector<FieldSeries> manoms;
            for (auto& m : members) manoms.push_back(anomaly(m, clim_fc, key.date));
            fc_anoms.push_back(ensemble_mean(manoms));
        }
        RmmSeries fc_rmm = rmm({&fc_anoms[0], &fc_anoms[1], &fc_anoms[2]}, rmm_basis);
        for (const auto& p : fc_rmm) {
            int lead = static_cast<int>(p.time);
            int verify_day = key.date + lead;
            auto it = obs_by_day.find(verify_day);
            if (it == obs_by_day.end() || lead > horizon) continue;
            fc_at_lead[lead].push_back(p);
            obs_at_lead[lead].push_back(*it->second);
            fc_csv << key.date << "," << lead << "," << p.rmm1 << "," << p.rmm2 << ","
                   << p.amplitude() << "," << p.phase() << "\n";
        }
    }

    std::vector<std::pair<int, double>> rmm_cor;
    for (int lead = 1; lead <= horizon; ++lead) {
        if (fc_at_lead[lead].size() < 2) break;
        auto cor = bivariate_cor(obs_at_lead[lead], fc_at_lead[lead]);
        if (!cor) break;
        rmm_cor.emplace_back(lead, *cor);
    }

    // NAO: leading Z500 mode over the North Atlantic sector.
    const BoxSpec nao_box{20.0, 80.0, 270.0, 40.0};
    auto z_doy = doy_climatology(data_dir, hyears, VariableId::Z500, c.toy.year_days);
    std::vector<Field> z_pool;
    for (int y : hyears) {
        auto days = truth_anomaly_days(data_dir, y, VariableId::Z500, z_doy);
        z_pool.insert(z_pool.end(), days.begin(), days.end());
    }
    DomainIndexBasis nao_basis = fit_domain_index_basis(z_pool, nao_box);
    nao_basis.save((fs::path(out) / "basis").string(), grid, VariableId::Z500);

    FieldSeries z_obs;
    for (auto& f : truth_anomaly_days(data_dir, ty, VariableId::Z500, z_doy)) {
        z_obs.insert(std::move(f));
    }
    IndexSeries nao_obs = domain_index(z_obs, nao_basis);
    std::map<int, double> nao_obs_by_day;
    for (const auto& p : nao_obs) nao_obs_by_day[static_cast<int>(p.time)] = p.value;
    {
        auto os = open_csv(fs::path(out) / "nao_obs.csv");
        os << "day,value\n";
        for (const auto& p : nao_obs) os << p.time << "," << p.value << "\n";
    }

    std::vector<std::vector<double>> nao_fc(horizon + 1), nao_ob(horizon + 1);
    auto nao_csv = open_csv(fs::path(out) / "nao_forecast.csv");
    nao_csv << "init_date,lead_day,value\n";
    for (const auto& key : keys) {
        auto members = load_forecast_members(forecast_dir, key.year, key.date,
                                             VariableId::Z500);
        std::vector<FieldSeries> manoms;
        for (auto& m : members) manoms.push_back(anomaly(m, clim_fc, key.date));
        IndexSeries fc_idx = domain_index(ensemble_mean(manoms), nao_basis);
        for (const auto& p : fc_idx) {
            int lead = static_cast<int>(p.time);
            auto it = nao_obs_by_day.find(key.date + lead);
            if (it == nao_obs_by_day.end() || lead > horizon) continue;
            nao_fc[lead].push_back(p.value);
            nao_ob[lead].push_back(it->second);
            nao_csv << key.date << "," << lead << "," << p.value << "\n";
        }
    }
    std::vector<std::pair<int, double>> nao_cor;
    for (int lead = 1; lead <= horizon; ++lead) {
        if (nao_fc[lead].size() < 2) break;
        const auto& a = nao_ob[lead];
        const auto& b = nao_fc[lead];
        double ma = 0.0, mb = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            ma += a[i];
            mb += b[i];
        }
        ma /= static_cast<double>(a.size());
        mb /= static_cast<double>(a.size());
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            sab += (a[i] - ma) * (b[i] - mb);
            saa += (a[i] - ma) * (a[i] - ma);
            sbb += (b[i] - mb) * (b[i] - mb);
        }
        if (saa <= 0.0 || sbb <= 0.0) break;
        nao_cor.emplace_back(lead, sab / std::sqrt(saa * sbb));
    }

    {
        auto os = open_csv(fs::path(out) / "cor.csv");
        os << "index,lead_day,cor\n";
        for (const auto& [lead, v] : rmm_cor) os << "RMM," << lead << "," << v << "\n";
        for (const auto& [lead, v] : nao_cor) os << "NAO," << lead << "," << v << "\n";
    }
    {
        auto os = open_csv(fs::path(out) / "skill.csv");
        os << "index,horizon_days\n";
        os << "RMM," << (rmm_cor.empty() ? 0 : skill_horizon(rmm_cor)) << "\n";
        os << "NAO," << (nao_cor.empty() ? 0 : skill_horizon(nao_cor)) << "\n";
    }
    write_manifest(out);
}

void cmd_couple_diag(const RunConfig& cfg, const std::string& data_dir,
                     const std::string& clim_dir, const std::string& forecast_dir,
                     const std::string& forecast_clim_dir, const std::string& out) {
    RunConfig c = cfg;
    c.finalize();
    fs::create_directories(fs::path(out) / "maps");
    Climatology clim_obs = Climatology::load(clim_dir);
    Climatology clim_fc = forecast_clim_dir == clim_dir || forecast_clim_dir.empty()
                              ? clim_obs
                              : Climatology::load(forecast_clim_dir);

    const std::vector<std::pair<VariableId, VariableId>> pairs = {
        {VariableId::SM100, VariableId::TP},  {VariableId::SM100, VariableId::T2M},
        {VariableId::SM100, VariableId::MSL}, {VariableId::SSH, VariableId::MSL},
        {VariableId::MLT, VariableId::MSL},   {VariableId::SIC, VariableId::T2M},
        {VariableId::SIC, VariableId::MSL}};

    std::vector<InitKey> keys;
    for (const auto& k : list_inits(forecast_dir)) {
        if (k.year == test_year(c)) keys.push_back(k);
    }
    if (keys.size() < 4) throw DataError("couple-diag: need >= 4 test initializations");

    auto window_anoms = [&](VariableId var, bool from_forecast) {
        std::vector<Field> fields;
        for (const auto& key : keys) {
            if (from_forecast) {
                auto members = load_forecast_members(forecast_dir, key.year, key.date, var);
                std::vector<FieldSeries> manoms;
                for (auto& m : members) manoms.push_back(anomaly(m, clim_fc, key.date));
                fields.push_back(window_mean(ensemble_mean(manoms), c.window_first_day,
                                             c.window_last_day));
            } else {
                fs::path p = fs::path(data_dir) / "inits" / std::to_string(key.year) /
                             std::to_string(key.date) / ("obs_" + var_name(var) + ".gfb");
                auto a = anomaly(read_gfb(p.string()), clim_obs, key.date);
                fields.push_back(window_mean(a, c.window_first_day, c.window_last_day));
            }
        }
        return fields;
    };

    auto summary = open_csv(fs::path(out) / "coupling.csv");
    summary << "pair,source,frac_significant,pattern_cor\n";
    for (const auto& [va, vb] : pairs) {
        const std::string pair_name = var_name(va) + "-" + var_name(vb);
        CouplingResult results[2];
        const char* sources[2] = {"obs", "forecast"};
        for (int s = 0; s < 2; ++s) {
            auto xa = window_anoms(va, s == 1);
            auto xb = window_anoms(vb, s == 1);
            results[s] = coupling_correlation(xa, xb);
            FieldSeries cor_s, sig_s;
            Field cor_f = metric_to_field(results[s].cor, va);
            Field sig_f = cor_f;
            for (std::size_t p = 0; p < sig_f.values.size(); ++p) {
                sig_f.values[p] = results[s].significant[p] ? 1.0 : 0.0;
            }
            cor_s.insert(std::move(cor_f));
            sig_s.insert(std::move(sig_f));
            write_gfb((fs::path(out) / "maps" /
                       ("cor_" + pair_name + "_" + sources[s] + ".gfb")).string(), cor_s);
            write_gfb((fs::path(out) / "maps" /
                       ("sig_" + pair_name + "_" + sources[s] + ".gfb")).string(), sig_s);
        }

        for (int s = 0; s < 2; ++s) {
            double frac = 0.0;
            std::size_t n_valid = 0;
            for (std::size_t p = 0; p < results[s].significant.size(); ++p) {
                if (results[s].cor.mask[p]) {
                    ++n_valid;
                    frac += results[s].significant[p];
                }
            }
            frac = n_valid ? frac / static_cast<double>(n_valid) : 0.0;

            // Pattern agreement of the forecast map with the observed map.
            double pattern = 1.0;
            if (s == 1) {
                std::vector<double> a, b;
                for (std::size_t p = 0; p < results[0].cor.values.size(); ++p) {
                    if (results[0].cor.mask[p] && results[1].cor.mask[p]) {
                        a.push_back(results[0].cor.values[p]);
                        b.push_back(results[1].cor.values[p]);
                    }
                }
                double ma = 0.0, mb = 0.0;
                for (std::size_t i = 0; i < a.size(); ++i) {
                    ma += a[i];
                    mb += b[i];
                }
                ma /= static_cast<double>(a.size());
                mb /= static_cast<double>(a.size());
                double sab = 0.0, saa = 0.0, sbb = 0.0;
                for (std::size_t i = 0; i < a.size(); ++i) {
                    sab += (a[i] - ma) * (b[i] - mb);
                    saa += (a[i] - ma) * (a[i] - ma);
                    sbb += (b[i] - mb) * (b[i] - mb);
                }
                pattern = (saa > 0.0 && sbb > 0.0) ? sab / std::sqrt(saa * sbb) : 0.0;
            }
            summary << pair_name << "," << sources[s] << "," << frac << "," << pattern
                    << "\n";
        }
    }
    summary.close();
    write_manifest(out);
}

void cmd_report(const std::string& coupled_verify_dir, const std::string& ablated_verify_dir,
                const std::string& out) {
    auto read_curves = [](const std::string& dir) {
        std::ifstream is(fs::path(dir) / "curves.csv");
        if (!is) throw DataError("report: missing curves.csv in " + dir);
        std::map<std::string, double> rows;
        std::string line;
        std::getline(is, line);
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            auto last = line.rfind(',');
            rows[line.substr(0, last)] = std::stod(line.substr(last + 1));
        }
        return rows;
    };
    auto coupled = read_curves(coupled_verify_dir);
    auto ablated = read_curves(ablated_verify_dir);

    fs::create_directories(out);
    auto os = open_csv(fs::path(out) / "summary.csv");
    os << "metric,variable,lead_week,coupled,ablated,difference\n";
    for (const auto& [key, cv] : coupled) {
        auto it = ablated.find(key);
        if (it == ablated.end()) continue;
        os << key << "," << cv << "," << it->second << "," << (cv - it->second) << "\n";
    }
    os.close();
    write_manifest(out);
}

}  // namespace ccast
