#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace jdlab::stats {

/// Sample mean with CLT interval mean +- z * se.
struct MeanCI {
    double mean = 0.0;
    double variance = 0.0;  // unbiased sample variance
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t n = 0;
};

MeanCI mean_ci(const std::vector<double>& values, double z = 1.96);

/// Binomial proportion: Wilson score interval, plus the plain standard error sqrt(p(1-p)/n).
struct Proportion {
    double p = 0.0;
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t k = 0;
    std::size_t n = 0;
};

Proportion proportion_ci(std::size_t k, std::size_t n, double z = 1.96);

/// Ordinary least squares y = intercept + slope * x with standard errors.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double intercept_se = 0.0;
    double residual_rms = 0.0;
    std::size_t n = 0;
};

LinearFit ols(const std::vector<double>& x, const std::vector<double>& y);
/// Weighted least squares with weights w_i = 1 / sigma_i^2; standard errors from the weights.
LinearFit wls(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w);

/// Two-sided standard normal quantile: z with P(|N| <= z) = level.
double normal_two_sided(double level);
/// Upper tail P(chi2_dof > x).
double chi_square_sf(double x, double dof);
/// Asymptotic Kolmogorov upper tail P(K > x) = 2 sum_k (-1)^{k-1} exp(-2 k^2 x^2).
double kolmogorov_sf(double x);

/// One-sample Kolmogorov-Smirnov statistic of `samples` against `cdf`. Sorts a copy.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

/// FNV-1a over raw bytes; used for bitwise determinism fingerprints.
std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_doubles(const std::vector<double>& values, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace jdlab::stats
