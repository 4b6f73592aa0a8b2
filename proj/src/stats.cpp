#include "jdlab/stats.hpp"

#include "jdlab/types.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace jdlab::stats {

MeanCI mean_ci(const std::vector<double>& values, double z) {
    MeanCI out;
    out.n = values.size();
    if (values.empty()) return out;
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t k = 0;
    for (double v : values) {
        ++k;
        const double delta = v - mean;
        mean += delta / static_cast<double>(k);
        m2 += delta * (v - mean);
    }
    out.mean = mean;
    out.variance = k > 1 ? m2 / static_cast<double>(k - 1) : 0.0;
    out.se = std::sqrt(out.variance / static_cast<double>(k));
    out.lo = mean - z * out.se;
    out.hi = mean + z * out.se;
    return out;
}

Proportion proportion_ci(std::size_t k, std::size_t n, double z) {
    Proportion out;
    out.k = k;
    out.n = n;
    if (n == 0) return out;
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    out.p = p;
    out.se = std::sqrt(p * (1.0 - p) / nn);
    const double z2 = z * z;
    const double centre = (p + z2 / (2.0 * nn)) / (1.0 + z2 / nn);
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / (1.0 + z2 / nn);
    out.lo = std::max(0.0, centre - half);
    out.hi = std::min(1.0, centre + half);
    return out;
}

LinearFit wls(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w) {
    if (x.size() != y.size() || x.size() != w.size()) throw ValidationError("wls: size mismatch");
    if (x.size() < 2) throw ValidationError("wls: need at least two points");
    LinearFit fit;
    fit.n = x.size();
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
    }
    const double mx = sx / sw;
    const double my = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw ValidationError("wls: abscissae are all equal");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        rss += w[i] * r * r;
    }
    fit.residual_rms = std::sqrt(rss / sw);
    fit.slope_se = std::sqrt(1.0 / sxx);
    fit.intercept_se = std::sqrt(1.0 / sw + mx * mx / sxx);
    return fit;
}

LinearFit ols(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ValidationError("ols: size mismatch");
    if (x.size() < 3) throw ValidationError("ols: need at least three points");
    LinearFit fit = wls(x, y, std::vector<double>(x.size(), 1.0));
    // unweighted: scale the standard errors by the residual variance
    const double n = static_cast<double>(x.size());
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        rss += r * r;
    }
    const double s2 = rss / (n - 2.0);
    fit.slope_se *= std::sqrt(s2);
    fit.intercept_se *= std::sqrt(s2);
    fit.residual_rms = std::sqrt(rss / n);
    return fit;
}

double normal_two_sided(double level) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * level);
}

double chi_square_sf(double x, double dof) {
    if (x <= 0.0) return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(dof), x));
}

double kolmogorov_sf(double x) {
    if (x <= 0.0) return 1.0;
    if (x < 0.2) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        s += (k % 2 == 1 ? term : -term);
        if (term < 1e-17) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
    if (samples.empty()) return 0.0;
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_doubles(const std::vector<double>& values, std::uint64_t seed) {
    return fnv1a(values.data(), values.size() * sizeof(double), seed);
}

std::string hex64(std::uint64_t value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace jdlab::stats
