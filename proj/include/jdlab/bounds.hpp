#pragma once

// Closed-form heat kernel profiles, the two-sided envelope, the Davies bound for truncated
// kernels, the optimized exponent F with its two parameter choices, and the five-case
// partition of the (t, R) quadrant.

#include "jdlab/scaling.hpp"
#include "jdlab/types.hpp"

#include <string>
#include <vector>

namespace jdlab {

/// t^{-d/2} exp(-r^2 / t).
double p_c(double t, double r, int d);
/// min(phi^{-1}(t)^{-d}, t / (r^d phi(r))); r = 0 gives the first branch.
double p_j(double t, double r, const ScaleFunction& phi, int d);
/// Radius where the two branches of p_j meet: r^d phi(r) = t phi^{-1}(t)^d.
double p_j_crossover(double t, const ScaleFunction& phi, int d);
/// phi~^{-1}(t)^{-d}.
double on_diagonal(double t, const ScaleFunction& phi, int d);

/// Constants of the two-sided bound. The Gaussian constants are rates: the term is
/// t^{-d/2} exp(-rate R^2 / t). Lower side: amplitude c1, rate c2; upper side: c3, c4.
struct EnvelopeConstants {
    double c1 = 1.0;
    double c2 = 0.25;
    double c3 = 1.0;
    double c4 = 0.25;
    double c_star = 1.0;
    bool fitted = false;
    void validate() const;
};

enum class Side { Upper, Lower };

/// amplitude * min(phi~^{-1}(t)^{-d}, t^{-d/2} exp(-rate R^2 / t) + p_j(t, R)).
double envelope(double t, double R, const ScaleFunction& phi, int d, const EnvelopeConstants& k, Side side);
/// Envelope with explicit amplitude and rate.
double envelope_shape(double t, double R, const ScaleFunction& phi, int d, double rate);

/// c1 t^{-d/2} exp(-s R + c2 s^2 (1 + e^{2 lambda s} delta) t).
double davies_truncated_bound(double t, double R, double s, double lambda, int d, double delta_lambda, double c1,
                              double c2);

struct DaviesMinimum {
    double value = 0.0;
    double s = 0.0;
};

/// Minimum of the Davies bound over s in {0} and a log grid of `points` values in
/// [s_lo, s_hi] / sqrt(t), polished by golden section around the best grid point.
DaviesMinimum davies_minimized(double t, double R, double lambda, int d, double delta_lambda, double c1, double c2,
                               double s_lo = 1e-3, double s_hi = 1e3, int points = 241);

enum class Situation { First, Second, NotApplicable };

struct FResult {
    Situation situation = Situation::NotApplicable;
    double value = 0.0;
    double log_value = 0.0;
    double s = 0.0;
    double lambda = 0.0;
    // comparison forms evaluated at the same point
    double log_polynomial_form = 0.0;  // log (t / phi_r(R))^{d / beta1 + 1}
    double log_gaussian_form = 0.0;    // -R^2 / (36 C_* t)
    std::string reason;
};

/// F = exp(-s R / 3 + C_* (s^2 + e^{s lambda} / phi_r(lambda)) t) at given parameters.
double F_log(double t, double R, double s, double lambda, const ScaleFunction& phi_r, double c_star);

/// Parameter choice by situation: (i) e^{K R^2/t} >= a phi_r(R)/t and R^2 >= t: lambda = H R,
/// s = log(e phi_r(R)/t) / (H R); (ii) e^{K R^2/t} < a phi_r(R)/t: lambda = K R / (6 C_*),
/// s = R / (6 C_* t). K = beta1 / (72 C_* (d + beta1)), H = beta1 / (12 (d + beta1)),
/// a = e K / c.
FResult optimized_F(double t, double R, const ScaleFunction& phi_r, int d, double c_star = 1.0);

/// log of the constant in F <= C (t / phi_r(R))^{d/beta1 + 1} implied by the scaling
/// conditions in the first situation: c3 + C_* e c H^{-beta2} - (d/beta1 + 1) with
/// c2 = C_* log(e/a) / H and c3 = (c2 / H)(log(e/a) + 12 c2 K). Astronomically large.
double first_situation_log_constant(const ScaleFunction& phi_r, int d, double c_star = 1.0);

/// log of the constant in F <= C exp(-R^2 / (36 C_* t)) in the second situation:
/// C_* a c (6 C_* / K)^{beta2}, valid for C_* >= 1/6.
double second_situation_log_constant(const ScaleFunction& phi_r, int d, double c_star = 1.0);

enum class Dominant { OnDiagonal, Gaussian, Jump };
const char* dominant_name(Dominant d);

struct RegionReport {
    int case_label = 0;
    Dominant dominant = Dominant::OnDiagonal;
    double on_diagonal = 0.0;
    double gaussian = 0.0;  // p_c with rate 1
    double jump = 0.0;      // p_j
};

/// Case 1: R^2 <= t < phi(R) <= 1; Case 2: phi(R) <= t; Case 3: t <= 1 <= R;
/// Case 4: phi(R) >= t >= 1; Case 5: t < R^2, phi(R) <= 1. First match wins.
RegionReport classify_region(double t, double R, const ScaleFunction& phi, int d = 1);

/// Raw predicates, without precedence.
std::vector<int> region_predicates(double t, double R, const ScaleFunction& phi);

struct RegionCell {
    double t = 0.0;
    double R = 0.0;
    RegionReport report;
};

/// Log grid sweep, n x n over [lo, hi]^2 (t outer, R inner).
std::vector<RegionCell> region_sweep(const ScaleFunction& phi, int d, int n, double lo = 1e-3, double hi = 10.0,
                                     int threads = 1);

}  // namespace jdlab
