#pragma once

// Diffusion matrix fields A(x), symmetric jump kernels J(x, y), the Model pairing them, and
// sampled verification of the hypotheses placed on both.

#include "jdlab/record.hpp"
#include "jdlab/scaling.hpp"
#include "jdlab/types.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace jdlab {

enum class DiffusionKind { Identity, ScalarProfile, RotationField, Table, Custom };

/// Symmetric matrix field A(x) with declared ellipticity constant: eigenvalues in
/// [1/ellipticity, ellipticity].
class DiffusionField {
public:
    using Evaluator = std::function<Mat(const Vec&)>;
    /// dA/dx_i for i < d.
    using Gradient = std::function<std::array<Mat, kMaxDim>(const Vec&)>;

    /// A = scale * I.
    static DiffusionField identity(int d, double scale = 1.0);
    /// d = 1: A(x) = base + amplitude * sin(frequency * x).
    static DiffusionField scalar_profile(double base = 1.0, double amplitude = 0.5, double frequency = 1.0);
    /// d = 2: A(x) = R(theta(x)) diag(lo, hi) R(theta(x))^T with theta(x) = twist * (sin x1 + cos x2).
    static DiffusionField rotation_field(double lo = 0.7, double hi = 1.3, double twist = 1.0);
    /// d = 1: piecewise-linear interpolation of `values` at equispaced nodes on [x_lo, x_hi],
    /// constant outside.
    static DiffusionField table(double x_lo, double x_hi, std::vector<double> values);
    static DiffusionField custom(int d, Evaluator a, double ellipticity, std::optional<Gradient> gradient = {},
                                 std::string label = "custom");

    Mat operator()(const Vec& x) const { return eval_(x); }
    int dim() const noexcept { return d_; }
    double ellipticity() const noexcept { return ellipticity_; }
    bool has_gradient() const noexcept { return static_cast<bool>(gradient_); }
    std::array<Mat, kMaxDim> gradient(const Vec& x) const;
    DiffusionKind kind() const noexcept { return kind_; }
    const std::string& label() const noexcept { return label_; }
    bool constant() const noexcept { return kind_ == DiffusionKind::Identity; }

    Record to_record() const;
    static DiffusionField from_record(const Record& rec, int d);

    /// Overrides the declared ellipticity constant (records may tighten or loosen it).
    void set_ellipticity(double lambda) { ellipticity_ = lambda; }

private:
    int d_ = 1;
    DiffusionKind kind_ = DiffusionKind::Identity;
    Evaluator eval_;
    Gradient gradient_;
    double ellipticity_ = 1.0;
    std::string label_;
    std::vector<double> params_;
};

/// b_j(x) = 1/2 sum_i d_i a_ij(x). Uses the analytic gradient when present, central
/// differences with step h otherwise.
Vec divergence_drift(const DiffusionField& a, const Vec& x, double h = 1e-4);

struct EllipticityReport {
    double c_low = 0.0;
    double c_high = 0.0;
    Vec argmin_point;
    Vec argmax_point;
    bool pass = false;
};

/// Extreme Rayleigh quotients of A(x) over the sampled points and unit directions.
/// Throws ValidationError when some A(x) is asymmetric beyond 1e-10.
EllipticityReport check_uniform_ellipticity(const DiffusionField& a, const std::vector<Vec>& points,
                                            const std::vector<Vec>& directions);

enum class ModulationKind { Constant, MidpointCosine };

/// J(x, y) = m(x, y) / (|x - y|^d phi(|x - y|)), optionally cut off above a radius. A kernel
/// may instead carry an arbitrary evaluator (counterexamples, tests); the majorant
/// kappa_up / (rho^d phi(rho)) must still dominate it.
class JumpKernel {
public:
    using Evaluator = std::function<double(const Vec&, const Vec&)>;

    /// J = 0.
    static JumpKernel none(int d);
    /// m = kappa, so kappa_low = kappa_up = kappa.
    static JumpKernel stable_like(int d, ScaleFunction phi, double kappa = 1.0);
    /// m(x, y) = mid + amp * prod_i cos(xbar_i) / (1 + |x - y|^2), xbar = (x + y) / 2.
    static JumpKernel midpoint_cosine(int d, ScaleFunction phi, double mid, double amp);
    /// Arbitrary symmetric evaluator with a declared envelope. `comparable` states whether
    /// kappa_low / (rho^d phi(rho)) <= J also holds.
    static JumpKernel custom(int d, Evaluator j, ScaleFunction phi, double kappa_low, double kappa_up,
                             bool comparable, bool translation_invariant, std::string label = "custom");

    /// J * 1{|x - y| <= radius}.
    JumpKernel truncated(double radius) const;

    double operator()(const Vec& x, const Vec& y) const;
    /// Radial envelope kappa_up / (rho^d phi(rho)) (0 beyond the cutoff).
    double majorant(double rho) const;

    int dim() const noexcept { return d_; }
    bool is_zero() const noexcept { return zero_; }
    bool translation_invariant() const noexcept { return invariant_; }
    bool comparable() const noexcept { return comparable_; }
    /// J depends on |x - y| only.
    bool radial() const noexcept { return !zero_ && !custom_ && modulation_ == ModulationKind::Constant; }
    bool symmetric_declared() const noexcept { return true; }
    const ScaleFunction& scale() const noexcept { return phi_; }
    double kappa_low() const noexcept { return kappa_low_; }
    double kappa_up() const noexcept { return kappa_up_; }
    double cutoff() const noexcept { return cutoff_; }
    const std::string& label() const noexcept { return label_; }

    /// Declared constants of the near-diagonal bound J <= kappa0 |x-y|^{-d-beta}, |x-y| <= delta0.
    double kappa0() const;
    double beta() const;
    double delta0() const noexcept { return 1.0; }
    /// Tail constant: sup_x Lambda_lambda(x) <= b0 lambda^{-beta} for lambda <= 1.
    double b0() const;
    /// Bounds on Lambda_lambda(x) * phi(lambda) implied by the comparability pair and the
    /// scaling exponents; the lower bound is 0 for kernels without a lower comparison.
    std::pair<double, double> tail_product_window() const;
    /// Budget for sup_x int (|x-y|^2 ^ 1) J(x, y) dy implied by the declared constants.
    double integrability_budget() const;

    Record to_record() const;
    static JumpKernel from_record(const Record& rec, int d);

private:
    int d_ = 1;
    bool zero_ = false;
    bool invariant_ = true;
    bool comparable_ = true;
    ModulationKind modulation_ = ModulationKind::Constant;
    double mod_mid_ = 1.0;
    double mod_amp_ = 0.0;
    Evaluator custom_;
    ScaleFunction phi_ = ScaleFunction::power(1.0);
    double kappa_low_ = 1.0;
    double kappa_up_ = 1.0;
    double cutoff_ = std::numeric_limits<double>::infinity();
    std::string label_;
};

/// Numerical controls for radial integrals against a kernel.
struct RadialRule {
    int panels_per_decade = 8;
    int order = 16;
    int angular = 32;  // directions for d >= 2
};

/// int_{lo < |z| < hi} g(|z|) J(x, x + z) dz in polar form with log-spaced Gauss-Legendre
/// panels. An infinite `hi` is closed with a power-law tail fitted at the last panel.
double shell_integral(const JumpKernel& j, const Vec& x, const std::function<double(double)>& g, double lo,
                      double hi, const RadialRule& rule = {});

/// Lambda_lambda(x) = int_{|y - x| > lambda} J(x, y) dy.
double jump_intensity_tail(const JumpKernel& j, const Vec& x, double lambda, const RadialRule& rule = {});

struct SmallJumpMoments {
    Vec mean;     // int_{|z|<=eps} z J(x, x+z) dz
    Mat second;   // int_{|z|<=eps} z z^T J(x, x+z) dz
    double delta = 0.0;  // trace of `second`
};

SmallJumpMoments small_jump_moments(const JumpKernel& j, const Vec& x, double eps, const RadialRule& rule = {});

struct IntegrabilityReport {
    double sup_value = 0.0;  // sup_x int (|z|^2 ^ 1) J
    double sup_tail = 0.0;   // sup_x int_{|z|>=1} J
    double budget = 0.0;
    double refinement_change = 0.0;  // relative change under doubled panel density
    Vec worst_point;
    bool converged = true;
    bool pass = false;
};

IntegrabilityReport check_J_integrability(const JumpKernel& j, const std::vector<Vec>& points);

struct NondegeneracyReport {
    std::vector<double> radii;
    std::vector<double> inf_values;  // per radius: inf over placements of int_{B(y0,r/16)} J(x, z) dz
    std::vector<double> envelope_lower;  // kappa_low * |B(0,r/16)| / ((9r/8)^d phi(9r/8))
    bool pass = false;
};

/// Placements: base points x0 with unit directions; y0 = x0 + r * direction. x ranges over a
/// quadrature sample of B(x0, r/16).
NondegeneracyReport check_J_lower_nondegeneracy(const JumpKernel& j, const std::vector<double>& radii,
                                                const std::vector<Vec>& base_points,
                                                const std::vector<Vec>& directions);

struct UJSReport {
    double average_ratio = 0.0;  // sup J(x,y) / (|B(x,r)|^{-1} int_{B(x,r)} J(z,y) dz)
    double constant = 0.0;       // same with the r^{-d} normalization: average_ratio / |B(0,1)|
    Vec worst_x, worst_y;
    double worst_r = 0.0;
    bool pass = false;
};

/// Radii violating r <= |x-y|/2 ^ 1 for a pair are skipped.
UJSReport check_UJS(const JumpKernel& j, const std::vector<std::pair<Vec, Vec>>& pairs,
                    const std::vector<double>& radii);

/// Largest relative asymmetry |J(x,y) - J(y,x)| / max over the pairs.
double symmetry_defect(const JumpKernel& j, const std::vector<std::pair<Vec, Vec>>& pairs);

/// Diffusion part plus jump part of one operator on R^d.
struct Model {
    std::string name;
    int d = 1;
    DiffusionField diffusion = DiffusionField::identity(1);
    JumpKernel kernel = JumpKernel::none(1);

    Record to_record() const;
    static Model from_record(const Record& rec);
};

struct ModelValidation {
    bool pass = false;
    std::vector<std::string> failures;
    EllipticityReport ellipticity;
    IntegrabilityReport integrability;
    double symmetry = 0.0;
    double comparability_low = 0.0;   // realized min of J |z|^d phi(|z|)
    double comparability_high = 0.0;  // realized max
    double near_diagonal_ratio = 0.0; // realized max of J |z|^{d+beta} / kappa0 over |z| <= delta0
};

/// Dimension agreement, symmetry on random pairs, ellipticity, integrability, declared
/// comparability and the near-diagonal bound, all on quasi-random samples of [-box, box]^d.
ModelValidation validate_model(const Model& m, int samples = 256, double box = 4.0, std::uint64_t seed = 1);

/// Shipped models: brownian, brownian2d, reference, stable, mixture, rotation2d, modulated2d.
std::vector<std::string> model_names();
Model make_model(const std::string& name);

/// Halton points in [lo, hi]^d.
std::vector<Vec> halton_points(int d, int n, double lo, double hi);

}  // namespace jdlab
