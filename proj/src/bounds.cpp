#include "jdlab/bounds.hpp"

#include "jdlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace jdlab {

namespace {

void require_positive_time(double t, const char* where) {
    if (!(t > 0.0)) throw DomainError(std::string(where) + ": t must be positive");
}

}  // namespace

double p_c(double t, double r, int d) {
    require_positive_time(t, "p_c");
    return std::pow(t, -0.5 * d) * std::exp(-r * r / t);
}

double p_j(double t, double r, const ScaleFunction& phi, int d) {
    require_positive_time(t, "p_j");
    if (r < 0.0) throw DomainError("p_j: r must be non-negative");
    const double diag = std::pow(phi.inverse(t), -d);
    if (r == 0.0) return diag;
    return std::min(diag, t / (std::pow(r, d) * phi(r)));
}

double p_j_crossover(double t, const ScaleFunction& phi, int d) {
    require_positive_time(t, "p_j_crossover");
    const double target = std::log(t) + d * std::log(phi.inverse(t));
    const auto g = [&](double lr) { return d * lr + std::log(phi(std::exp(lr))) - target; };
    double lo = std::log(phi.inverse(t)) - 2.0;
    double hi = lo + 4.0;
    while (g(lo) > 0.0) lo -= 2.0;
    while (g(hi) < 0.0) hi += 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < 0.0 ? lo : hi) = mid;
    }
    return std::exp(0.5 * (lo + hi));
}

double on_diagonal(double t, const ScaleFunction& phi, int d) {
    require_positive_time(t, "on_diagonal");
    return std::pow(phi.tilde_inverse(t), -d);
}

void EnvelopeConstants::validate() const {
    for (double v : {c1, c2, c3, c4, c_star})
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("envelope constants must be positive and finite");
    if (c1 > c3) throw ValidationError("envelope constants: lower amplitude c1 exceeds upper amplitude c3");
    if (c2 < c4) throw ValidationError("envelope constants: lower Gaussian rate c2 is below upper rate c4");
}

double envelope_shape(double t, double R, const ScaleFunction& phi, int d, double rate) {
    require_positive_time(t, "envelope");
    const double gauss = std::pow(t, -0.5 * d) * std::exp(-rate * R * R / t);
    return std::min(on_diagonal(t, phi, d), gauss + p_j(t, R, phi, d));
}

double envelope(double t, double R, const ScaleFunction& phi, int d, const EnvelopeConstants& k, Side side) {
    k.validate();
    if (side == Side::Upper) return k.c3 * envelope_shape(t, R, phi, d, k.c4);
    return k.c1 * envelope_shape(t, R, phi, d, k.c2);
}

double davies_truncated_bound(double t, double R, double s, double lambda, int d, double delta_lambda, double c1,
                              double c2) {
    const double expo = -s * R + c2 * s * s * (1.0 + std::exp(2.0 * lambda * s) * delta_lambda) * t;
    return c1 * std::pow(t, -0.5 * d) * std::exp(expo);
}

DaviesMinimum davies_minimized(double t, double R, double lambda, int d, double delta_lambda, double c1, double c2,
                               double s_lo, double s_hi, int points) {
    require_positive_time(t, "davies_minimized");
    DaviesMinimum best{c1 * std::pow(t, -0.5 * d), 0.0};
    const double scale = 1.0 / std::sqrt(t);
    const double step = std::log(s_hi / s_lo) / (points - 1);
    const auto at = [&](double ls) { return davies_truncated_bound(t, R, std::exp(ls), lambda, d, delta_lambda, c1, c2); };
    int arg = -1;
    for (int k = 0; k < points; ++k) {
        const double s = scale * s_lo * std::exp(step * k);
        const double v = davies_truncated_bound(t, R, s, lambda, d, delta_lambda, c1, c2);
        if (v < best.value) {
            best = {v, s};
            arg = k;
        }
    }
    if (arg < 0) return best;
    // golden-section polish in log s between the neighbouring grid points
    double a = std::log(best.s) - step, b = std::log(best.s) + step;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = at(x1), f2 = at(x2);
    for (int it = 0; it < 60; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = at(x2);
        }
    }
    const double lm = 0.5 * (a + b);
    const double v = at(lm);
    if (v < best.value) best = {v, std::exp(lm)};
    return best;
}

double F_log(double t, double R, double s, double lambda, const ScaleFunction& phi_r, double c_star) {
    return -s * R / 3.0 + c_star * (s * s + std::exp(s * lambda) / phi_r(lambda)) * t;
}

FResult optimized_F(double t, double R, const ScaleFunction& phi_r, int d, double c_star) {
    require_positive_time(t, "optimized_F");
    if (!(R > 0.0)) throw DomainError("optimized_F: R must be positive");
    const double b1 = phi_r.beta1();
    const double c = phi_r.comp_const();
    const double K = b1 / (72.0 * c_star * (d + b1));
    const double H = b1 / (12.0 * (d + b1));
    const double a = std::numbers::e * K / c;
    const double phiR = phi_r(R);
    FResult out;
    out.log_polynomial_form = (d / b1 + 1.0) * std::log(t / phiR);
    out.log_gaussian_form = -R * R / (36.0 * c_star * t);
    // compare e^{K R^2/t} with a phi_r(R)/t in logs
    const double lhs = K * R * R / t;
    const double rhs = std::log(a * phiR / t);
    if (lhs >= rhs && R * R >= t) {
        out.lambda = H * R;
        out.s = std::log(std::numbers::e * phiR / t) / (H * R);
        if (!(out.s > 0.0)) {
            out.reason = "first situation with log(e phi_r(R)/t) <= 0";
            return out;
        }
        out.situation = Situation::First;
    } else if (lhs < rhs) {
        out.lambda = K * R / (6.0 * c_star);
        out.s = R / (6.0 * c_star * t);
        out.situation = Situation::Second;
    } else {
        out.reason = "R^2 < t and e^{K R^2/t} >= a phi_r(R)/t: neither situation applies";
        return out;
    }
    out.log_value = F_log(t, R, out.s, out.lambda, phi_r, c_star);
    out.value = std::exp(out.log_value);
    return out;
}

double first_situation_log_constant(const ScaleFunction& phi_r, int d, double c_star) {
    const double b1 = phi_r.beta1();
    const double c = phi_r.comp_const();
    const double K = b1 / (72.0 * c_star * (d + b1));
    const double H = b1 / (12.0 * (d + b1));
    const double a = std::numbers::e * K / c;
    const double le = std::max(std::log(std::numbers::e / a), 0.0);
    const double c2 = c_star * le / H;
    const double c3 = (c2 / H) * (le + 12.0 * c2 * K);
    return c3 + c_star * std::numbers::e * c * std::pow(H, -phi_r.beta2()) - (d / b1 + 1.0);
}

double second_situation_log_constant(const ScaleFunction& phi_r, int d, double c_star) {
    const double b1 = phi_r.beta1();
    const double c = phi_r.comp_const();
    const double K = b1 / (72.0 * c_star * (d + b1));
    const double a = std::numbers::e * K / c;
    return c_star * a * c * std::pow(6.0 * c_star / K, phi_r.beta2());
}

const char* dominant_name(Dominant d) {
    switch (d) {
        case Dominant::OnDiagonal: return "on-diagonal";
        case Dominant::Gaussian: return "gaussian";
        case Dominant::Jump: return "jump";
    }
    return "?";
}

std::vector<int> region_predicates(double t, double R, const ScaleFunction& phi) {
    const double pr = phi(R);
    std::vector<int> hits;
    if (R * R <= t && t < pr && pr <= 1.0) hits.push_back(1);
    if (pr <= t) hits.push_back(2);
    if (t <= 1.0 && 1.0 <= R) hits.push_back(3);
    if (pr >= t && t >= 1.0) hits.push_back(4);
    if (t < R * R && pr <= 1.0) hits.push_back(5);
    return hits;
}

RegionReport classify_region(double t, double R, const ScaleFunction& phi, int d) {
    require_positive_time(t, "classify_region");
    if (!(R > 0.0)) throw DomainError("classify_region: R must be positive");
    RegionReport rep;
    const auto hits = region_predicates(t, R, phi);
    rep.case_label = hits.empty() ? 0 : hits.front();
    rep.on_diagonal = on_diagonal(t, phi, d);
    rep.gaussian = p_c(t, R, d);
    rep.jump = p_j(t, R, phi, d);
    if (rep.on_diagonal <= rep.gaussian + rep.jump) {
        rep.dominant = Dominant::OnDiagonal;
    } else {
        rep.dominant = rep.jump > rep.gaussian ? Dominant::Jump : Dominant::Gaussian;
    }
    return rep;
}

std::vector<RegionCell> region_sweep(const ScaleFunction& phi, int d, int n, double lo, double hi, int threads) {
    if (n < 2) throw DomainError("region_sweep: need at least 2 points per axis");
    std::vector<RegionCell> cells(static_cast<std::size_t>(n) * n);
    const auto at = [&](int k) { return lo * std::pow(hi / lo, static_cast<double>(k) / (n - 1)); };
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        const double t = at(static_cast<int>(i));
        for (int j = 0; j < n; ++j) {
            const double R = at(j);
            cells[i * n + j] = {t, R, classify_region(t, R, phi, d)};
        }
    });
    return cells;
}

}  // namespace jdlab
