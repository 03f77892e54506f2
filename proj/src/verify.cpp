#include "ccast/verify.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <sstream>

namespace ccast {

namespace {

const char* k_metric_names[] = {"TCC", "RMSE", "RPSS", "BSS", "COR"};

void require_consistent(const std::vector<Field>& fields, const char* what) {
    if (fields.empty()) throw DataError(std::string(what) + ": empty input");
    for (const auto& f : fields) f.require_same_grid(fields.front(), what);
}

}  // namespace

const std::string& metric_name(Metric m) {
    static const std::vector<std::string> names(std::begin(k_metric_names),
                                                std::end(k_metric_names));
    return names[static_cast<std::size_t>(m)];
}

Metric metric_from_name(const std::string& name) {
    for (int i = 0; i < 5; ++i) {
        if (name == k_metric_names[i]) return static_cast<Metric>(i);
    }
    throw DataError("unknown metric '" + name + "'");
}

MetricMap::MetricMap(GridSpec g, Metric m, int week)
    : grid(std::move(g)), metric(m), lead_week(week),
      values(grid.npoints(), 0.0), mask(grid.npoints(), 0) {}

void MatchedSample::validate(std::size_t min_n) const {
    if (pred.size() != obs.size()) {
        throw DataError("matched sample: prediction/observation count mismatch");
    }
    if (pred.size() < min_n) {
        throw DataError("matched sample: need at least " + std::to_string(min_n) +
                        " initializations, have " + std::to_string(pred.size()));
    }
    require_consistent(pred, "matched sample");
    for (const auto& o : obs) o.require_same_grid(pred.front(), "matched sample");
}

CategoryProbs::CategoryProbs(GridSpec g, int categories)
    : grid(std::move(g)), k(categories),
      probs(grid.npoints() * static_cast<std::size_t>(categories), 0.0),
      mask(grid.npoints(), 1) {}

MetricMap tcc(const MatchedSample& sample) {
    sample.validate(2);
    const std::size_t n = sample.count();
    const std::size_t npts = sample.pred.front().size();
    MetricMap out(sample.pred.front().grid, Metric::TCC, 0);

    #pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(npts); ++p) {
        const auto pp = static_cast<std::size_t>(p);
        bool valid = true;
        double mp = 0.0, mo = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!sample.pred[j].mask[pp] || !sample.obs[j].mask[pp]) {
                valid = false;
                break;
            }
            mp += sample.pred[j].values[pp];
            mo += sample.obs[j].values[pp];
        }
        if (!valid) continue;
        mp /= static_cast<double>(n);
        mo /= static_cast<double>(n);
        double spo = 0.0, spp = 0.0, soo = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double dp = sample.pred[j].values[pp] - mp;
            double dq = sample.obs[j].values[pp] - mo;
            spo += dp * dq;
            spp += dp * dp;
            soo += dq * dq;
        }
        if (spp <= 0.0 || soo <= 0.0) continue;  // degenerate point stays masked
        out.values[pp] = spo / (std::sqrt(spp) * std::sqrt(soo));
        out.mask[pp] = 1;
    }
    return out;
}

MetricMap rmse(const MatchedSample& sample) {
    sample.validate(1);
    const std::size_t n = sample.count();
    const std::size_t npts = sample.pred.front().size();
    MetricMap out(sample.pred.front().grid, Metric::RMSE, 0);

    #pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(npts); ++p) {
        const auto pp = static_cast<std::size_t>(p);
        bool valid = true;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!sample.pred[j].mask[pp] || !sample.obs[j].mask[pp]) {
                valid = false;
                break;
            }
            double d = sample.pred[j].values[pp] - sample.obs[j].values[pp];
            s += d * d;
        }
        if (!valid) continue;
        out.values[pp] = std::sqrt(s / static_cast<double>(n));
        out.mask[pp] = 1;
    }
    return out;
}

namespace {

int categorize(double value, const std::vector<const Field*>& thresholds, std::size_t point) {
    // Boundary values fall into the lower category.
    int cat = 0;
    for (const Field* t : thresholds) {
        if (t->values[point] < value) ++cat;
    }
    return cat;
}

std::vector<const Field*> check_thresholds(const std::vector<Field>& thresholds,
                                           const Field& reference) {
    if (thresholds.empty()) throw DataError("category_probs: no thresholds");
    std::vector<const Field*> ptrs;
    for (const auto& t : thresholds) {
        t.require_same_grid(reference, "category thresholds");
        ptrs.push_back(&t);
    }
    for (std::size_t i = 1; i < ptrs.size(); ++i) {
        for (std::size_t p = 0; p < reference.size(); ++p) {
            if (ptrs[i]->values[p] < ptrs[i - 1]->values[p]) {
                throw DataError("category thresholds not pointwise ordered");
            }
        }
    }
    return ptrs;
}

}  // namespace

CategoryProbs category_probs(const std::vector<Field>& members,
                             const std::vector<Field>& thresholds) {
    require_consistent(members, "category_probs");
    if (members.size() < 2) throw DataError("category_probs: need >= 2 members");
    auto thr = check_thresholds(thresholds, members.front());
    const int k = static_cast<int>(thresholds.size()) + 1;
    CategoryProbs out(members.front().grid, k);
    const double inv_m = 1.0 / static_cast<double>(members.size());
    for (std::size_t p = 0; p < members.front().size(); ++p) {
        bool valid = true;
        for (const auto& m : members) {
            if (!m.mask[p]) {
                valid = false;
                break;
            }
        }
        if (!valid) {
            out.mask[p] = 0;
            continue;
        }
        for (const auto& m : members) {
            int cat = categorize(m.values[p], thr, p);
            out.probs[p * static_cast<std::size_t>(k) + static_cast<std::size_t>(cat)] += inv_m;
        }
    }
    return out;
}

CategoryProbs observed_probs(const Field& obs, const std::vector<Field>& thresholds) {
    auto thr = check_thresholds(thresholds, obs);
    const int k = static_cast<int>(thresholds.size()) + 1;
    CategoryProbs out(obs.grid, k);
    for (std::size_t p = 0; p < obs.size(); ++p) {
        if (!obs.mask[p]) {
            out.mask[p] = 0;
            continue;
        }
        int cat = categorize(obs.values[p], thr, p);
        out.probs[p * static_cast<std::size_t>(k) + static_cast<std::size_t>(cat)] = 1.0;
    }
    return out;
}

CategoryProbs climatological_probs(const GridSpec& grid, int k) {
    CategoryProbs out(grid, k);
    if (k == 3) {
        for (std::size_t p = 0; p < grid.npoints(); ++p) {
            out.probs[p * 3 + 0] = 1.0 / 3.0;
            out.probs[p * 3 + 1] = 1.0 / 3.0;
            out.probs[p * 3 + 2] = 1.0 / 3.0;
        }
    } else if (k == 2) {
        for (std::size_t p = 0; p < grid.npoints(); ++p) {
            out.probs[p * 2 + 0] = 0.9;
            out.probs[p * 2 + 1] = 0.1;
        }
    } else {
        throw DataError("climatological_probs: unsupported K=" + std::to_string(k));
    }
    return out;
}

namespace {

void check_prob_vector(const CategoryProbs& c, std::size_t point) {
    double sum = 0.0;
    for (int i = 0; i < c.k; ++i) {
        double p = c.at(point, i);
        if (p < 0.0) throw DataError("rps: negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw DataError("rps: probabilities sum to " + std::to_string(sum));
    }
}

}  // namespace

std::vector<double> rps(const CategoryProbs& forecast, const CategoryProbs& observed) {
    if (forecast.k != observed.k) throw DataError("rps: category count mismatch");
    if (forecast.grid != observed.grid) throw DataError("rps: grid mismatch");
    const std::size_t npts = forecast.grid.npoints();
    std::vector<double> out(npts, 0.0);
    for (std::size_t p = 0; p < npts; ++p) {
        if (!forecast.mask[p] || !observed.mask[p]) {
            out[p] = std::nan("");
            continue;
        }
        check_prob_vector(forecast, p);
        check_prob_vector(observed, p);
        double cf = 0.0, co = 0.0, s = 0.0;
        for (int i = 0; i < forecast.k; ++i) {
            cf += forecast.at(p, i);
            co += observed.at(p, i);
            s += (cf - co) * (cf - co);
        }
        out[p] = s;
    }
    return out;
}

namespace {

MetricMap skill_from_rps(const std::vector<CategoryProbs>& forecast_by_init,
                         const std::vector<CategoryProbs>& observed_by_init,
                         const CategoryProbs& clim, Metric metric, int lead_week) {
    if (forecast_by_init.size() != observed_by_init.size() || forecast_by_init.empty()) {
        throw DataError("skill score: initialization count mismatch");
    }
    const GridSpec& grid = clim.grid;
    const std::size_t npts = grid.npoints();
    std::vector<double> mean_f(npts, 0.0), mean_c(npts, 0.0);
    std::vector<std::uint8_t> ok(npts, 1);
    for (std::size_t j = 0; j < forecast_by_init.size(); ++j) {
        auto rf = rps(forecast_by_init[j], observed_by_init[j]);
        auto rc = rps(clim, observed_by_init[j]);
        for (std::size_t p = 0; p < npts; ++p) {
            if (std::isnan(rf[p]) || std::isnan(rc[p])) {
                ok[p] = 0;
            } else {
                mean_f[p] += rf[p];
                mean_c[p] += rc[p];
            }
        }
    }
    MetricMap out(grid, metric, lead_week);
    for (std::size_t p = 0; p < npts; ++p) {
        if (!ok[p] || mean_c[p] <= 0.0) continue;  // zero-reference points masked
        out.values[p] = 1.0 - mean_f[p] / mean_c[p];
        out.mask[p] = 1;
    }
    return out;
}

}  // namespace

MetricMap rpss(const std::vector<CategoryProbs>& forecast_by_init,
               const std::vector<CategoryProbs>& observed_by_init,
               const CategoryProbs& clim, int lead_week) {
    return skill_from_rps(forecast_by_init, observed_by_init, clim, Metric::RPSS, lead_week);
}

MetricMap bss(const std::vector<CategoryProbs>& forecast_by_init,
              const std::vector<CategoryProbs>& observed_by_init,
              const CategoryProbs& clim, int lead_week) {
    for (const auto& f : forecast_by_init) {
        if (f.k != 2) throw DataError("bss: needs binary categories");
    }
    if (clim.k != 2) throw DataError("bss: needs binary categories");
    // The Brier score is the K=2 ranked probability score on the same events.
    return skill_from_rps(forecast_by_init, observed_by_init, clim, Metric::BSS, lead_week);
}

MetricMap skill_difference(const MetricMap& a, const MetricMap& b) {
    if (a.metric != b.metric) throw DataError("skill_difference: metric mismatch");
    if (a.grid != b.grid) throw DataError("skill_difference: grid mismatch");
    if (a.lead_week != b.lead_week) throw DataError("skill_difference: lead mismatch");
    MetricMap out(a.grid, a.metric, a.lead_week);
    for (std::size_t p = 0; p < a.values.size(); ++p) {
        if (a.mask[p] && b.mask[p]) {
            out.values[p] = a.values[p] - b.values[p];
            out.mask[p] = 1;
        }
    }
    return out;
}

CouplingResult coupling_correlation(const std::vector<Field>& x_by_init,
                                    const std::vector<Field>& y_by_init,
                                    double alpha) {
    if (x_by_init.size() != y_by_init.size()) {
        throw DataError("coupling_correlation: sample count mismatch");
    }
    if (x_by_init.size() < 4) throw DataError("insufficient samples");
    require_consistent(x_by_init, "coupling_correlation");
    for (const auto& y : y_by_init) y.require_same_grid(x_by_init.front(), "coupling_correlation");

    const std::size_t n = x_by_init.size();
    const std::size_t npts = x_by_init.front().size();
    CouplingResult result{MetricMap(x_by_init.front().grid, Metric::COR, 0),
                          std::vector<std::uint8_t>(npts, 0)};

    const boost::math::students_t dist(static_cast<double>(n - 2));
    const double t_crit = boost::math::quantile(dist, 1.0 - alpha / 2.0);

    #pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(npts); ++p) {
        const auto pp = static_cast<std::size_t>(p);
        bool valid = true;
        double mx = 0.0, my = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!x_by_init[j].mask[pp] || !y_by_init[j].mask[pp]) {
                valid = false;
                break;
            }
            mx += x_by_init[j].values[pp];
            my += y_by_init[j].values[pp];
        }
        if (!valid) continue;
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        double sxy = 0.0, sxx = 0.0, syy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double dx = x_by_init[j].values[pp] - mx;
            double dy = y_by_init[j].values[pp] - my;
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        if (sxx <= 0.0 || syy <= 0.0) continue;
        double r = sxy / (std::sqrt(sxx) * std::sqrt(syy));
        result.cor.values[pp] = r;
        result.cor.mask[pp] = 1;
        double denom = 1.0 - r * r;
        if (denom <= 0.0) {
            result.significant[pp] = 1;
        } else {
            double t = std::abs(r) * std::sqrt(static_cast<double>(n - 2) / denom);
            result.significant[pp] = t > t_crit ? 1 : 0;
        }
    }
    return result;
}

std::vector<std::pair<int, double>> global_skill_curve(const std::vector<MetricMap>& maps) {
    std::vector<std::pair<int, double>> curve;
    for (const auto& m : maps) {
        Field f(m.grid, VariableId::T2M, 0);
        f.values = m.values;
        f.mask = m.mask;
        curve.emplace_back(m.lead_week, latitude_weighted_mean(f));
    }
    return curve;
}

Field metric_to_field(const MetricMap& map, VariableId var) {
    Field f(map.grid, var, map.lead_week);
    f.values = map.values;
    f.mask = map.mask;
    return f;
}

}  // namespace ccast
