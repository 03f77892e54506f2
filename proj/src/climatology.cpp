#include "ccast/climatology.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ccast/gfb.hpp"

namespace fs = std::filesystem;

namespace ccast {

double pct_rank(Pct p) {
    switch (p) {
        case Pct::p10: return 0.10;
        case Pct::p33: return 1.0 / 3.0;
        case Pct::p67: return 2.0 / 3.0;
        case Pct::p90: return 0.90;
    }
    throw DataError("bad percentile id");
}

const std::string& pct_name(Pct p) {
    static const std::vector<std::string> names = {"p10", "p33.3", "p66.7", "p90"};
    return names[static_cast<std::size_t>(p)];
}

namespace {

const Pct k_all_pcts[] = {Pct::p10, Pct::p33, Pct::p67, Pct::p90};

std::string key_desc(int init_date, int lead, const VarKey& key) {
    std::ostringstream os;
    os << "(date " << init_date << ", lead " << lead << ", " << var_name(key.var);
    if (!key.level.empty()) os << "/" << key.level;
    os << ")";
    return os.str();
}

/// Percentile with rank r = q*(n-1)+1 on the sorted sample (1-based).
double percentile_sorted(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    double r = q * static_cast<double>(n - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(r));
    std::size_t hi = std::min(lo + 1, n - 1);
    double frac = r - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

bool Climatology::has_daily(int init_date, int lead_day, const VarKey& key) const {
    auto it = daily_.find({init_date, lead_day});
    return it != daily_.end() && it->second.count(key) != 0;
}

const Climatology::DailyStats& Climatology::daily(int init_date, int lead_day,
                                                  const VarKey& key) const {
    auto it = daily_.find({init_date, lead_day});
    if (it != daily_.end()) {
        auto jt = it->second.find(key);
        if (jt != it->second.end()) return jt->second;
    }
    throw DataError("climatology: missing key " + key_desc(init_date, lead_day, key));
}

bool Climatology::has_weekly(int init_date, int week, const VarKey& key) const {
    auto it = weekly_.find({init_date, week});
    return it != weekly_.end() && it->second.count(key) != 0;
}

const Climatology::WeeklyStats& Climatology::weekly(int init_date, int week,
                                                    const VarKey& key) const {
    auto it = weekly_.find({init_date, week});
    if (it != weekly_.end()) {
        auto jt = it->second.find(key);
        if (jt != it->second.end()) return jt->second;
    }
    throw DataError("climatology: missing weekly key " + key_desc(init_date, week, key));
}

void Climatology::put_daily(int init_date, int lead_day, const VarKey& key, DailyStats stats) {
    daily_[{init_date, lead_day}][key] = std::move(stats);
}

void Climatology::put_weekly(int init_date, int week, const VarKey& key, WeeklyStats stats) {
    weekly_[{init_date, week}][key] = std::move(stats);
}

std::vector<int> Climatology::init_dates() const {
    std::set<int> dates;
    for (const auto& kv : daily_) dates.insert(kv.first.first);
    return {dates.begin(), dates.end()};
}

int Climatology::horizon_days() const {
    int h = 0;
    for (const auto& kv : daily_) h = std::max(h, kv.first.second);
    return h;
}

int Climatology::weeks() const {
    int w = 0;
    for (const auto& kv : weekly_) w = std::max(w, kv.first.second);
    return w;
}

Climatology build_climatology(const HindcastSet& hindcast, const ClimatologyOptions& opts) {
    if (hindcast.entries.empty()) throw DataError("build_climatology: empty hindcast");

    // Group entries by init calendar date.
    std::map<int, std::vector<const HindcastEntry*>> by_date;
    for (const auto& e : hindcast.entries) by_date[e.init_date].push_back(&e);

    Climatology clim;
    for (const auto& [date, entries] : by_date) {
        std::set<int> years;
        for (const auto* e : entries) years.insert(e->year);
        if (years.size() < 2) {
            throw DataError("build_climatology: need >= 2 hindcast years for date " +
                            std::to_string(date));
        }

        // Variable keys and horizon from the first entry's first member.
        if (entries.front()->members.empty()) throw DataError("build_climatology: no members");
        const auto& proto = entries.front()->members.front();
        for (const auto& [vkey, proto_series] : proto) {
            const GridSpec& grid = proto_series.grid();
            const auto lead_days = proto_series.times();
            const std::size_t npts = grid.npoints();

            // Collect the pooled year x member sample per lead day.
            std::vector<std::vector<const Field*>> sample_by_lead(lead_days.size());
            for (const auto* e : entries) {
                for (const auto& member : e->members) {
                    auto it = member.find(vkey);
                    if (it == member.end()) {
                        throw DataError("build_climatology: member missing " +
                                        var_name(vkey.var));
                    }
                    if (it->second.grid() != grid) {
                        throw DataError("build_climatology: inconsistent grids across years");
                    }
                    for (std::size_t li = 0; li < lead_days.size(); ++li) {
                        sample_by_lead[li].push_back(&it->second.at(lead_days[li]));
                    }
                }
            }

            auto stats_from_sample = [&](const std::vector<const Field*>& sample,
                                         std::int64_t t, bool with_pcts)
                -> std::tuple<Field, Field, std::map<Pct, Field>> {
                Field mean(grid, vkey.var, t);
                Field sd(grid, vkey.var, t);
                mean.level = sd.level = vkey.level;
                std::map<Pct, Field> pcts;
                if (with_pcts) {
                    for (Pct p : k_all_pcts) {
                        Field f(grid, vkey.var, t);
                        f.level = vkey.level;
                        pcts.emplace(p, std::move(f));
                    }
                }
                const double n = static_cast<double>(sample.size());
                #pragma omp parallel for schedule(static)
                for (long long pi = 0; pi < static_cast<long long>(npts); ++pi) {
                    const auto p = static_cast<std::size_t>(pi);
                    double m = 0.0;
                    for (const Field* f : sample) m += f->values[p];
                    m /= n;
                    double var = 0.0;
                    for (const Field* f : sample) {
                        var += (f->values[p] - m) * (f->values[p] - m);
                    }
                    mean.values[p] = m;
                    sd.values[p] = std::sqrt(var / n);  // population divisor
                    if (with_pcts) {
                        std::vector<double> sorted;
                        sorted.reserve(sample.size());
                        for (const Field* f : sample) sorted.push_back(f->values[p]);
                        std::sort(sorted.begin(), sorted.end());
                        for (Pct pc : k_all_pcts) {
                            pcts.at(pc).values[p] = percentile_sorted(sorted, pct_rank(pc));
                        }
                    }
                }
                return {std::move(mean), std::move(sd), std::move(pcts)};
            };

            for (std::size_t li = 0; li < lead_days.size(); ++li) {
                auto [mean, sd, pcts] =
                    stats_from_sample(sample_by_lead[li], lead_days[li], opts.daily_percentiles);
                clim.put_daily(date, static_cast<int>(lead_days[li]), vkey,
                               {std::move(mean), std::move(sd), std::move(pcts)});
            }

            // Weekly statistics on weekly-mean values, pooled the same way.
            int max_weeks = static_cast<int>(lead_days.size()) / 7;
            int weeks = opts.weeks > 0 ? std::min(opts.weeks, max_weeks) : max_weeks;
            for (int w = 1; w <= weeks; ++w) {
                std::vector<Field> weekly_fields;
                for (const auto* e : entries) {
                    for (const auto& member : e->members) {
                        weekly_fields.push_back(weekly_mean(member.at(vkey), w));
                    }
                }
                std::vector<const Field*> sample;
                for (const auto& f : weekly_fields) sample.push_back(&f);
                auto [mean, sd, pcts] = stats_from_sample(sample, w, true);
                clim.put_weekly(date, w, vkey, {std::move(mean), std::move(sd), std::move(pcts)});
            }
        }
    }
    return clim;
}

FieldSeries anomaly(const FieldSeries& x, const Climatology& clim, int init_date) {
    if (x.empty()) throw DataError("anomaly: empty series");
    VarKey key{x.var(), x.level()};
    FieldSeries out;
    for (const auto& [t, f] : x.entries()) {
        const auto& stats = clim.daily(init_date, static_cast<int>(t), key);
        out.insert(field_sub(f, stats.mean));
    }
    return out;
}

Field weekly_mean(const FieldSeries& x, int week) {
    if (week < 1) throw DataError("weekly_mean: bad week " + std::to_string(week));
    return window_mean(x, 7 * (week - 1) + 1, 7 * week);
}

Field window_mean(const FieldSeries& x, int day_first, int day_last) {
    if (day_first > day_last) throw DataError("window_mean: empty window");
    Field acc;
    bool first = true;
    for (int d = day_first; d <= day_last; ++d) {
        if (!x.has(d)) {
            throw DataError("window_mean: series missing lead day " + std::to_string(d));
        }
        acc = first ? x.at(d) : field_add(acc, x.at(d));
        first = false;
    }
    return field_scale(acc, 1.0 / static_cast<double>(day_last - day_first + 1));
}

namespace {

double ols_trend_at(const std::vector<int>& years, const std::vector<double>& values,
                    int test_year) {
    const std::size_t n = years.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += static_cast<double>(years[i]);
        my += values[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = static_cast<double>(years[i]) - mx;
        sxy += dx * (values[i] - my);
        sxx += dx * dx;
    }
    double slope = sxy / sxx;
    return my + slope * (static_cast<double>(test_year) - mx);
}

}  // namespace

DetrendResult detrend(const std::vector<int>& years,
                      const std::vector<double>& pred_by_year,
                      const std::vector<double>& obs_by_year,
                      int test_year, double test_pred, double test_obs) {
    if (years.size() < 3) throw DataError("insufficient trend sample");
    if (pred_by_year.size() != years.size() || obs_by_year.size() != years.size()) {
        throw DataError("detrend: year/value count mismatch");
    }
    return {test_pred - ols_trend_at(years, pred_by_year, test_year),
            test_obs - ols_trend_at(years, obs_by_year, test_year)};
}

std::pair<Field, Field> detrend_fields(const std::vector<int>& years,
                                       const std::vector<Field>& pred_by_year,
                                       const std::vector<Field>& obs_by_year,
                                       int test_year, const Field& test_pred,
                                       const Field& test_obs) {
    if (years.size() < 3) throw DataError("insufficient trend sample");
    if (pred_by_year.size() != years.size() || obs_by_year.size() != years.size()) {
        throw DataError("detrend: year/value count mismatch");
    }
    for (const auto& f : pred_by_year) f.require_same_grid(test_pred, "detrend");
    for (const auto& f : obs_by_year) f.require_same_grid(test_obs, "detrend");

    Field dp = test_pred;
    Field dob = test_obs;
    const std::size_t npts = test_pred.size();
    const std::size_t ny = years.size();
    #pragma omp parallel for schedule(static)
    for (long long pi = 0; pi < static_cast<long long>(npts); ++pi) {
        const auto p = static_cast<std::size_t>(pi);
        std::vector<double> pv(ny), ov(ny);
        for (std::size_t i = 0; i < ny; ++i) {
            pv[i] = pred_by_year[i].values[p];
            ov[i] = obs_by_year[i].values[p];
        }
        dp.values[p] = test_pred.values[p] - ols_trend_at(years, pv, test_year);
        dob.values[p] = test_obs.values[p] - ols_trend_at(years, ov, test_year);
    }
    return {std::move(dp), std::move(dob)};
}

double standardized_box_anomaly(const FieldSeries& anomalies, const Climatology& clim,
                                int init_date, const BoxSpec& box,
                                int day_first, int day_last) {
    if (anomalies.empty()) throw DataError("standardized_box_anomaly: empty series");
    VarKey key{anomalies.var(), anomalies.level()};
    const GridSpec& grid = anomalies.grid();
    const auto& lats = grid.lats();
    const auto& lons = grid.lons();

    double time_sum = 0.0;
    int n_days = 0;
    for (int d = day_first; d <= day_last; ++d) {
        if (!anomalies.has(d)) {
            throw DataError("standardized_box_anomaly: missing lead day " + std::to_string(d));
        }
        const Field& a = anomalies.at(d);
        const Field& sd = clim.daily(init_date, d, key).stddev;
        double num = 0.0, den = 0.0;
        std::size_t in_box = 0, degenerate = 0;
        for (std::size_t i = 0; i < grid.nlat(); ++i) {
            for (std::size_t j = 0; j < grid.nlon(); ++j) {
                if (!box.contains(lats[i], lons[j])) continue;
                ++in_box;
                std::size_t p = i * grid.nlon() + j;
                if (!a.mask[p]) continue;
                if (sd.values[p] <= 0.0) {
                    ++degenerate;
                    continue;
                }
                double w = grid.lat_weights()[i];
                num += w * a.values[p] / sd.values[p];
                den += w;
            }
        }
        if (in_box == 0) throw DataError("standardized_box_anomaly: box misses the grid");
        if (2 * degenerate > in_box) throw DataError("degenerate variance");
        if (den == 0.0) throw DataError("empty field");
        time_sum += num / den;
        ++n_days;
    }
    return time_sum / static_cast<double>(n_days);
}

namespace {

std::string clim_filename(int date, const VarKey& key, const std::string& stat, bool weekly) {
    std::ostringstream os;
    os << (weekly ? "climw" : "clim") << "_d" << date << "_" << var_name(key.var);
    if (!key.level.empty()) os << "_" << key.level;
    os << "_" << stat << ".gfb";
    return os.str();
}

}  // namespace

void Climatology::save(const std::string& dir) const {
    fs::create_directories(dir);
    std::ostringstream index;
    index << "date,lead,var,level,stat,filename\n";

    auto dump = [&](const auto& store, bool weekly) {
        // Regroup flat (date, lead) keys into per-(date, var, stat) series.
        std::map<std::tuple<int, VarKey, std::string>, FieldSeries> files;
        for (const auto& [dk, vars] : store) {
            const auto& [date, lead] = dk;
            for (const auto& [vkey, stats] : vars) {
                auto add = [&](const std::string& stat, const Field& f) {
                    Field g = f;
                    g.time = lead;
                    files[{date, vkey, stat}].insert(std::move(g));
                    index << date << "," << (weekly ? "w" : "") << lead << ","
                          << var_name(vkey.var) << ","
                          << (vkey.level.empty() ? "none" : vkey.level) << "," << stat << ","
                          << clim_filename(date, vkey, stat, weekly) << "\n";
                };
                add("mean", stats.mean);
                add("std", stats.stddev);
                for (const auto& [pc, f] : stats.percentiles) add(pct_name(pc), f);
            }
        }
        for (const auto& [fk, series] : files) {
            const auto& [date, vkey, stat] = fk;
            write_gfb((fs::path(dir) / clim_filename(date, vkey, stat, weekly)).string(), series);
        }
    };
    dump(daily_, false);
    dump(weekly_, true);

    std::ofstream os(fs::path(dir) / "index.csv");
    if (!os) throw DataError("climatology save: cannot write index in " + dir);
    os << index.str();
}

Climatology Climatology::load(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "index.csv");
    if (!is) throw DataError("climatology load: missing index.csv in " + dir);
    std::string line;
    std::getline(is, line);  // header
    Climatology clim;
    std::map<std::string, FieldSeries> cache;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string date_s, lead_s, var_s, level_s, stat_s, file_s;
        if (!std::getline(ls, date_s, ',') || !std::getline(ls, lead_s, ',') ||
            !std::getline(ls, var_s, ',') || !std::getline(ls, level_s, ',') ||
            !std::getline(ls, stat_s, ',') || !std::getline(ls, file_s)) {
            throw DataError("climatology load: malformed index row: " + line);
        }
        bool weekly = !lead_s.empty() && lead_s[0] == 'w';
        int lead = std::stoi(weekly ? lead_s.substr(1) : lead_s);
        int date = std::stoi(date_s);
        VarKey key{var_from_name(var_s), level_s == "none" ? "" : level_s};

        auto it = cache.find(file_s);
        if (it == cache.end()) {
            it = cache.emplace(file_s, read_gfb((fs::path(dir) / file_s).string())).first;
        }
        const Field& f = it->second.at(lead);

        auto assign = [&](auto& stats) {
            if (stat_s == "mean") {
                stats.mean = f;
            } else if (stat_s == "std") {
                stats.stddev = f;
            } else {
                for (Pct p : k_all_pcts) {
                    if (stat_s == pct_name(p)) {
                        stats.percentiles[p] = f;
                        return;
                    }
                }
                throw DataError("climatology load: unknown stat '" + stat_s + "'");
            }
        };
        if (weekly) {
            auto dk = std::pair<int, int>{date, lead};
            assign(clim.weekly_[dk][key]);
        } else {
            auto dk = std::pair<int, int>{date, lead};
            assign(clim.daily_[dk][key]);
        }
    }
    return clim;
}

}  // namespace ccast
