#include "jdlab/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace jdlab::quad {

namespace {

Rule build_gauss_legendre(int n) {
    Rule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // recompute derivative at the converged node
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = pk;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    if (n == 1) {
        rule.nodes[0] = 0.0;
        rule.weights[0] = 2.0;
    }
    return rule;
}

double simpson_step(const std::function<double(double)>& f, double a, double b, double fa,
                    double fm, double fb, double whole, double tol, int depth,
                    bool& converged, double& err) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (!std::isfinite(delta)) {
        converged = false;
        return left + right;
    }
    if (depth <= 0) {
        converged = false;
        err += std::abs(delta) / 15.0;
        return left + right + delta / 15.0;
    }
    // second clause: tolerance already below round-off of the local estimate
    if (std::abs(delta) <= 15.0 * tol || std::abs(delta) <= 1e-14 * std::abs(left + right)) {
        err += std::abs(delta) / 15.0;
        return left + right + delta / 15.0;
    }
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, converged, err) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, converged, err);
}

}  // namespace

const Rule& gauss_legendre(int n) {
    static std::mutex mutex;
    static std::map<int, Rule> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, build_gauss_legendre(n)).first;
    return it->second;
}

double integrate_gl(const std::function<double(double)>& f, double a, double b, int n) {
    const Rule& rule = gauss_legendre(n);
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
    return sum * half;
}

double integrate_log_panels(const std::function<double(double)>& f, double a, double b,
                            int panels_per_decade, int order) {
    if (!(a > 0.0) || !(b > a)) return 0.0;
    const double la = std::log(a);
    const double lb = std::log(b);
    const int panels =
        std::max(1, static_cast<int>(std::ceil((lb - la) / std::log(10.0) * panels_per_decade)));
    const double width = (lb - la) / panels;
    double sum = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double u0 = la + p * width;
        sum += integrate_gl(
            [&](double u) {
                const double x = std::exp(u);
                return f(x) * x;
            },
            u0, u0 + width, order);
    }
    return sum;
}

SimpsonResult adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double abs_tol, int max_depth) {
    SimpsonResult out;
    if (b <= a) return out;
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    out.value =
        simpson_step(f, a, b, fa, fm, fb, whole, abs_tol, max_depth, out.converged, out.error_estimate);
    return out;
}

double sphere_area(int d) {
    switch (d) {
        case 1: return 2.0;
        case 2: return 2.0 * std::numbers::pi;
        case 3: return 4.0 * std::numbers::pi;
        default: throw DomainError("sphere_area: dimension must be 1, 2 or 3");
    }
}

double ball_volume(int d) { return sphere_area(d) / d; }

DirectionRule direction_rule(int d, int resolution) {
    DirectionRule rule;
    if (d == 1) {
        rule.directions = {Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
        rule.weights = {1.0, 1.0};
    } else if (d == 2) {
        const double dtheta = 2.0 * std::numbers::pi / resolution;
        for (int k = 0; k < resolution; ++k) {
            const double th = (k + 0.5) * dtheta;
            Vec v(2);
            v << std::cos(th), std::sin(th);
            rule.directions.push_back(v);
            rule.weights.push_back(dtheta);
        }
    } else if (d == 3) {
        const int nz = std::max(2, resolution / 2);
        const Rule& gl = gauss_legendre(nz);
        const double dphi = 2.0 * std::numbers::pi / resolution;
        for (int i = 0; i < nz; ++i) {
            const double z = gl.nodes[i];
            const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
            for (int k = 0; k < resolution; ++k) {
                const double ph = (k + 0.5) * dphi;
                Vec v(3);
                v << s * std::cos(ph), s * std::sin(ph), z;
                rule.directions.push_back(v);
                rule.weights.push_back(gl.weights[i] * dphi);
            }
        }
    } else {
        throw DomainError("direction_rule: dimension must be 1, 2 or 3");
    }
    return rule;
}

BallRule ball_rule(const Vec& center, double radius, int radial_order, int angular) {
    const int d = static_cast<int>(center.size());
    BallRule rule;
    const Rule& gl = gauss_legendre(radial_order);
    if (d == 1) {
        for (int i = 0; i < radial_order; ++i) {
            Vec p = center;
            p(0) += radius * gl.nodes[i];
            rule.points.push_back(p);
            rule.weights.push_back(radius * gl.weights[i]);
        }
        return rule;
    }
    const DirectionRule dirs = direction_rule(d, angular);
    for (int i = 0; i < radial_order; ++i) {
        const double rho = 0.5 * radius * (gl.nodes[i] + 1.0);
        const double wr = 0.5 * radius * gl.weights[i] * std::pow(rho, d - 1);
        for (std::size_t k = 0; k < dirs.directions.size(); ++k) {
            rule.points.push_back(center + rho * dirs.directions[k]);
            rule.weights.push_back(wr * dirs.weights[k]);
        }
    }
    return rule;
}

}  // namespace jdlab::quad
