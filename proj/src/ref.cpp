#include "ccast/ref.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ccast::ref {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty()) {
        throw std::invalid_argument("pearson: size mismatch");
    }
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

double rmse(const std::vector<double>& p, const std::vector<double>& o) {
    if (p.size() != o.size() || p.empty()) {
        throw std::invalid_argument("rmse: size mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - o[i]) * (p[i] - o[i]);
    return std::sqrt(s / static_cast<double>(p.size()));
}

double rps(const std::vector<double>& p_forecast, const std::vector<double>& p_obs) {
    if (p_forecast.size() != p_obs.size()) {
        throw std::invalid_argument("rps: category count mismatch");
    }
    double cf = 0.0, co = 0.0, s = 0.0;
    for (std::size_t k = 0; k < p_forecast.size(); ++k) {
        cf += p_forecast[k];
        co += p_obs[k];
        s += (cf - co) * (cf - co);
    }
    return s;
}

double skill_score(const std::vector<double>& score, const std::vector<double>& reference) {
    if (score.size() != reference.size() || score.empty()) {
        throw std::invalid_argument("skill_score: size mismatch");
    }
    double ms = 0.0, mr = 0.0;
    for (std::size_t i = 0; i < score.size(); ++i) {
        ms += score[i];
        mr += reference[i];
    }
    return 1.0 - ms / mr;
}

double brier(double p_event, bool occurred) {
    double o = occurred ? 1.0 : 0.0;
    return (p_event - o) * (p_event - o);
}

double percentile_linear(std::vector<double> sample, double q) {
    if (sample.empty()) throw std::invalid_argument("percentile: empty sample");
    std::sort(sample.begin(), sample.end());
    const std::size_t n = sample.size();
    double r = q * static_cast<double>(n - 1);  // 0-based fractional rank
    std::size_t lo = static_cast<std::size_t>(std::floor(r));
    std::size_t hi = std::min(lo + 1, n - 1);
    double frac = r - static_cast<double>(lo);
    return sample[lo] * (1.0 - frac) + sample[hi] * frac;
}

void ols_fit(const std::vector<double>& x, const std::vector<double>& y,
             double& slope, double& intercept) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("ols_fit: need >= 2 points");
    }
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    slope = sxy / sxx;
    intercept = my - slope * mx;
}

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) s += a[i * k + l] * b[l * n + j];
            c[i * n + j] = s;
        }
    }
}

void correlation_map(const std::vector<std::vector<double>>& pred,
                     const std::vector<std::vector<double>>& obs,
                     std::vector<double>& out, std::vector<unsigned char>& valid) {
    if (pred.size() != obs.size() || pred.empty()) {
        throw std::invalid_argument("correlation_map: sample count mismatch");
    }
    const std::size_t n = pred.size();
    const std::size_t npoints = pred[0].size();
    out.assign(npoints, 0.0);
    valid.assign(npoints, 0);
    std::vector<double> xs(n), ys(n);
    for (std::size_t p = 0; p < npoints; ++p) {
        for (std::size_t j = 0; j < n; ++j) {
            xs[j] = pred[j][p];
            ys[j] = obs[j][p];
        }
        double mx = 0.0, my = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mx += xs[j];
            my += ys[j];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        double sxy = 0.0, sxx = 0.0, syy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            sxy += (xs[j] - mx) * (ys[j] - my);
            sxx += (xs[j] - mx) * (xs[j] - mx);
            syy += (ys[j] - my) * (ys[j] - my);
        }
        if (sxx > 0.0 && syy > 0.0) {
            out[p] = sxy / (std::sqrt(sxx) * std::sqrt(syy));
            valid[p] = 1;
        }
    }
}

}  // namespace ccast::ref
