#pragma once

#include <cstddef>
#include <vector>

namespace ccast::ref {

// Plain serial implementations written directly from the defining formulas.
// They are kept independent of the main pipeline for two jobs: oracle
// comparisons in the test suites and the baseline side of the benchmark.

/// Pearson correlation of two equal-length samples.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Root mean square difference of two equal-length samples.
double rmse(const std::vector<double>& p, const std::vector<double>& o);

/// Ranked probability score: sum over categories of squared cumulative
/// probability differences, no normalization.
double rps(const std::vector<double>& p_forecast, const std::vector<double>& p_obs);

/// Skill score 1 - mean(score)/mean(reference score).
double skill_score(const std::vector<double>& score, const std::vector<double>& reference);

/// Brier score of an exceedance probability against a 0/1 outcome.
double brier(double p_event, bool occurred);

/// Percentile by linear interpolation on the sorted sample,
/// rank r = q*(n-1)+1 (1-based); q in [0, 1].
double percentile_linear(std::vector<double> sample, double q);

/// Ordinary least squares fit y = intercept + slope*x.
void ols_fit(const std::vector<double>& x, const std::vector<double>& y,
             double& slope, double& intercept);

/// Row-major serial matrix multiply: C[m x n] = A[m x k] * B[k x n].
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);

/// Serial per-point Pearson correlation across n_samples sample planes of
/// npoints each; out[p] = corr over samples at point p. Degenerate points
/// get valid[p] = 0.
void correlation_map(const std::vector<std::vector<double>>& pred,
                     const std::vector<std::vector<double>>& obs,
                     std::vector<double>& out, std::vector<unsigned char>& valid);

}  // namespace ccast::ref
