#pragma once

// Jump scale functions: phi, the merged clock phi~(r) = r^2 ^ phi(r), their inverses,
// and phi built from a probability measure over stable indices.

#include "jdlab/record.hpp"
#include "jdlab/types.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace jdlab {

/// Probability measure over stable indices in (0, 2). Densities are discretized once with
/// a 64-node Gauss-Legendre rule, so every measure is stored as weighted atoms.
class MixtureMeasure {
public:
    static MixtureMeasure atoms(std::vector<std::pair<double, double>> alpha_weight);
    static MixtureMeasure uniform(double alpha_lo, double alpha_hi);
    static MixtureMeasure density(const std::function<double(double)>& f, double alpha_lo,
                                  double alpha_hi, std::string label = "density");

    const std::vector<double>& alphas() const noexcept { return alphas_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    double alpha_lo() const noexcept { return alpha_lo_; }
    double alpha_hi() const noexcept { return alpha_hi_; }
    double mass() const;
    const std::string& label() const noexcept { return label_; }

    /// Support inside (0, 2) and unit mass (1e-12); throws ValidationError otherwise.
    void validate() const;

    /// Record form: `atoms = a1:w1, a2:w2` or `uniform = lo, hi`.
    Record to_record() const;

private:
    std::vector<double> alphas_;
    std::vector<double> weights_;
    double alpha_lo_ = 0.0;
    double alpha_hi_ = 0.0;
    std::string label_;
    std::string record_kind_;
};

enum class ScaleKind { Power, Mixture, Table, Rescaled };

/// phi : [0, inf) -> [0, inf), strictly increasing, phi(0) = 0, phi(1) = 1, with scaling
/// exponents 0 < beta1 <= beta2 and comparability constant c >= 1. Value type.
///
/// Rescaled instances represent phi_r(s) = phi(r s) / phi~(r); they keep the exponents and
/// constant of their parent but are not normalized at 1.
class ScaleFunction {
public:
    static ScaleFunction power(double alpha);
    static ScaleFunction table(std::vector<double> radii, std::vector<double> values, double beta1,
                               double beta2, double comp_const, std::string description = "table");

    ScaleFunction rescaled(double r) const;

    double operator()(double r) const { return eval(r); }
    double eval(double r) const;
    double inverse(double t) const;
    double tilde(double r) const;
    double tilde_inverse(double t) const;

    double beta1() const noexcept { return beta1_; }
    double beta2() const noexcept { return beta2_; }
    double comp_const() const noexcept { return comp_const_; }
    const std::string& description() const noexcept { return description_; }
    ScaleKind kind() const noexcept { return kind_; }

    /// Declarative record: kind, parameters and the normalization check value phi(1).
    Record to_record() const;
    static ScaleFunction from_record(const Record& rec);

private:
    friend ScaleFunction mixed_stable_phi(const MixtureMeasure& nu);

    double eval_raw(double r) const;
    double inverse_bisect(double t) const;

    ScaleKind kind_ = ScaleKind::Power;
    double alpha_ = 1.0;
    std::vector<double> atom_alpha_;
    std::vector<double> atom_weight_;
    std::vector<double> table_log_r_;
    std::vector<double> table_log_phi_;
    std::shared_ptr<const ScaleFunction> parent_;
    double rescale_r_ = 1.0;
    double rescale_div_ = 1.0;
    std::shared_ptr<const MixtureMeasure> measure_;
    double beta1_ = 1.0;
    double beta2_ = 1.0;
    double comp_const_ = 1.0;
    std::string description_;
};

double phi_eval(const ScaleFunction& phi, double r);
double phi_inverse(const ScaleFunction& phi, double t);
double phi_tilde(const ScaleFunction& phi, double r);
double phi_tilde_inverse(const ScaleFunction& phi, double t);

/// phi(r) = (integral r^-alpha nu(d alpha))^-1, with beta1 = alpha_lo, beta2 = alpha_hi.
ScaleFunction mixed_stable_phi(const MixtureMeasure& nu);

/// Grid verification of the two growth conditions on phi:
///   c^-1 (R/r)^beta1 <= phi(R)/phi(r) <= c (R/r)^beta2            (ratio condition)
///   int_0^r s/phi(s) ds <= c r^2/phi(r)                            (integral condition)
struct ScalingReport {
    double ratio_constant = 1.0;      // worst realized c over grid pairs
    double integral_constant = 0.0;   // worst realized c for the integral condition
    double worst_ratio_r = 0.0, worst_ratio_R = 0.0;
    double worst_integral_r = 0.0;
    bool exponents_valid = true;      // 0 < beta1 <= beta2 < 2
    bool integral_converged = true;
    bool monotone = true;
    bool pass = false;
    std::string reason;
};

ScalingReport check_scaling_conditions(const ScaleFunction& phi, const std::vector<double>& grid,
                                       double tol = 1e-9);

/// `per_decade` log-spaced radii covering [lo, hi].
std::vector<double> log_grid(double lo, double hi, int per_decade);

/// int_0^r s/phi(s) ds by adaptive Simpson in log s. `converged` is false when the integrand
/// fails to decay towards 0 (exponent at or above 2).
double small_scale_integral(const ScaleFunction& phi, double r, bool* converged = nullptr);

}  // namespace jdlab
