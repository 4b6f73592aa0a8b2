#pragma once

// Verdicts from oracle and simulator output: sandwich fits, exit and hitting scaling,
// near-diagonal lower bounds, space-time hitting, Harnack ratios, Hoelder moduli, tightness
// and the Davies bound against truncated-kernel densities.

#include "jdlab/bounds.hpp"
#include "jdlab/oracle.hpp"
#include "jdlab/record.hpp"
#include "jdlab/simulator.hpp"
#include "jdlab/stats.hpp"

#include <string>
#include <vector>

namespace jdlab {

inline constexpr double kMassFloor = 1e-8;

// ------------------------------------------------------------------ sandwich

struct DensitySample {
    double t = 0.0;
    double x = 0.0;  // base point (first coordinate)
    double R = 0.0;  // |y - x|
    double value = 0.0;
};

/// Node densities of oracle heat vectors with value >= floor, tagged with distance from the base.
std::vector<DensitySample> density_samples(const LatticeGenerator& g, const std::vector<HeatVector>& heats,
                                           double floor = kMassFloor);

struct SandwichFit {
    EnvelopeConstants constants;
    double ratio = 0.0;  // c3 / c1
    bool feasible = false;
    bool pass = false;
    double budget = 1e3;
    std::size_t points = 0;
    DensitySample upper_witness;  // attains c3
    DensitySample lower_witness;  // attains c1
    std::vector<double> rates;    // Gaussian-rate grid
    std::vector<double> c3_by_rate;
    std::vector<double> c1_by_rate;
    std::vector<double> slack_low;   // per point: log(data / lower envelope) >= 0
    std::vector<double> slack_high;  // per point: log(upper envelope / data) >= 0
    std::string grid;
    std::string reason;
    Record to_record() const;
};

/// 0.5 * 2^{k/4}, k = -16..15: 32 rates including the Brownian value 1/2.
std::vector<double> default_rate_grid();

/// Smallest c3 (largest c1) per Gaussian rate so that the data sit below (above) the upper
/// (lower) envelope at every sample; the reported pair minimizes c3 / c1 subject to c2 >= c4.
/// `phi` = nullptr fits the pure Gaussian shape t^{-d/2} exp(-rate R^2 / t).
SandwichFit fit_sandwich(const std::vector<DensitySample>& data, const ScaleFunction* phi, int d,
                         double budget = 1e3, const std::vector<double>& rates = default_rate_grid());

// ------------------------------------------------------------------ exit and hitting

struct ScalingFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double lo = 0.0;  // 95% interval on the slope
    double hi = 0.0;
    double residual = 0.0;
    std::size_t scales = 0;
};

/// Weighted log-log regression; sigma are standard errors of y (in the original scale).
ScalingFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& sigma);

struct ExitScalingReport {
    std::vector<ExitRadius> radii;
    ScalingFit fit;
    double a1 = 0.0;  // min E[tau] / r^2
    double c1 = 0.0;  // max E[tau] / r^2
    bool all_usable = true;
    Record to_record() const;
};

/// Requires >= 3 radii spanning >= 2 octaves, all <= 1.
ExitScalingReport exit_scaling(const Model& model, const Vec& x0, const std::vector<double>& radii,
                               const SimConfig& config, std::size_t n, double dt_per_r2 = 0.0);

struct HittingReport {
    std::vector<HittingTail> tails;
    double constant = 0.0;        // max over s of the upper CI of p / (r^2 / (s ^ 1)^2)
    double ratio = 0.0;           // p(s_0) / p(s_1)
    double ratio_lo = 0.0;        // delta-method 95% interval
    double ratio_hi = 0.0;
    double scaling_ratio = 0.0;   // (s_1 ^ 1)^2 / (s_0 ^ 1)^2
    bool pass = false;
    std::string reason;
    Record to_record() const;
};

/// Pass when the fitted constant is finite and the observed ratio p(s_0)/p(s_1) does not
/// exceed the s^{-2} ratio beyond its interval (the tail decays no faster than allowed).
HittingReport hitting_scaling(const Model& model, const Vec& x, double r, const std::vector<double>& s_list,
                              const SimConfig& config, std::size_t n);

// ------------------------------------------------------------------ density agreement

struct AgreementReport {
    std::size_t bins = 0;       // bins with oracle mass >= threshold
    std::size_t within = 0;     // of those, |count - n p| <= k sqrt(n p (1 - p))
    double fraction = 0.0;
    double worst_z = 0.0;
    double worst_x = 0.0;
    std::vector<double> edges;
    std::vector<double> oracle_mass;
    std::vector<double> counts;
    std::string csv() const;
};

/// d = 1: bins of `nodes_per_bin` lattice cells, centred on nodes.
AgreementReport density_agreement(const LatticeGenerator& g, const HeatVector& heat, const std::vector<double>& samples,
                                  std::size_t n_total, int nodes_per_bin, double mass_threshold = 1e-3, double k = 3.0);

// ------------------------------------------------------------------ oracle-based checks

struct OracleGrid {
    double h_per_scale = 20.0;  // nodes per characteristic length
    double margin = 1.0;        // box padding beyond the region of interest
    int threads = 1;
    EvolveOptions evolve;
};

struct NearDiagonalReport {
    std::vector<double> times;
    std::vector<double> minima;  // min over half-ball pairs of p^B(t, x, y) t^{d/2}
    std::vector<double> witness_x;
    std::vector<double> witness_y;
    double spread = 0.0;         // max / min
    double factor = 3.0;
    bool pass = false;
    Record to_record() const;
};

/// Killed kernels on B(x0, sqrt t) with h = sqrt t / h_per_scale (d = 1).
NearDiagonalReport near_diagonal_check(const Model& model, double x0, const std::vector<double>& times,
                                       const OracleGrid& grid = {}, double factor = 3.0);

struct SpaceTimeSet {
    double s_lo = 0.0;  // time slab [s_lo, s_hi] inside (0, r^2]
    double s_hi = 0.0;
    double center = 0.0;
    double radius = 0.0;
};

struct SpaceTimeReport {
    std::vector<double> occupation;  // (1/r^2) int int_{A_{r^2 - s}} p^B(s, x, y) dy ds
    std::vector<double> measure;     // m_{d+1}(A)
    std::vector<double> ratio;       // occupation r^{d+2} / m(A)
    std::vector<bool> skipped;
    double constant = 0.0;           // min ratio
    double spread = 0.0;             // max / min ratio over non-skipped sets
    Record to_record() const;
};

/// Oracle occupation lower bound for P^{(r^2, x)}(sigma_A < tau_r), d = 1. Sets outside the
/// cylinder raise DomainError; null sets are skipped.
SpaceTimeReport spacetime_hitting_check(const Model& model, double x, double r, const std::vector<SpaceTimeSet>& sets,
                                        const OracleGrid& grid = {}, int time_points = 64);

struct HarnackScale {
    double R = 0.0;
    double sup_minus = 0.0;
    double inf_plus = 0.0;
    double ratio = 0.0;
    bool resolved = true;
};

struct HarnackReport {
    double base = 0.0;
    double delta = 0.0;
    std::vector<HarnackScale> scales;
    double spread = 0.0;  // max / min ratio
    bool pass = false;
    Record to_record() const;
};

/// u(t, y) = p(t, y, base) on Q_- = (d R^2, 2 d R^2) x B(base, R) and Q_+ = (3 d R^2, 4 d R^2) x B.
/// With `full_scale` the windows use phi~(R) in place of R^2.
HarnackReport harnack_ratio(const Model& model, double base, const std::vector<double>& radii, double delta,
                            const OracleGrid& grid = {}, double factor = 3.0, int time_samples = 6,
                            bool full_scale = false);

struct HolderReport {
    double R = 0.0;
    double kappa = 0.0;
    double kappa_se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double sup_norm = 0.0;
    std::vector<double> distances;  // bin centres
    std::vector<double> maxima;     // max |dh| / ||h|| per bin
    bool resolved = true;
    Record to_record() const;
};

/// h(s, y) = p(R^2 + s, y, x0) on (0, R^2] x B(x0, R); kappa is the slope of
/// log max |dh| against log(|ds|^{1/2} + |dy|) over distance bins.
HolderReport holder_modulus(const Model& model, double x0, double R, const OracleGrid& grid = {}, int bins = 10);

// ------------------------------------------------------------------ tightness

struct TightnessPoint {
    double t = 0.0;
    double displacement = 0.0;
    double predicted = 0.0;  // t phi~^{-1}(t)^d / (D^d phi~(D))
    std::size_t n = 0;
    stats::Proportion hits;
    double ratio = 0.0;
    double ratio_lo = 0.0;
};

struct TightnessReport {
    double c1 = 2.0;
    std::vector<TightnessPoint> points;
    double constant = 0.0;  // min ratio_lo
    bool pass = false;
    bool skipped = false;   // no jumps: the estimate does not apply
    std::string reason;
    Record to_record() const;
};

/// P_x(X_t in B(x + D e_1, c1 phi~^{-1}(t))) over t x multiples with D = m c1 phi~^{-1}(t).
/// n per point is ceil(min_count / predicted), clamped to [n_min, n_max].
TightnessReport tightness_check(const Model& model, double x, const std::vector<double>& times,
                                const std::vector<double>& multiples, const SimConfig& config, double c1 = 2.0,
                                double min_count = 100.0, std::size_t n_min = 1000, std::size_t n_max = 2000000);

// ------------------------------------------------------------------ Davies

struct DaviesPoint {
    double t = 0.0;
    double R = 0.0;
    double value = 0.0;  // truncated-kernel density
    double bound = 0.0;  // minimized Davies bound with fitted constants
};

struct DaviesFit {
    double lambda = 0.0;
    double delta = 0.0;  // small-jump second moment trace for the truncated kernel
    double c1 = 0.0;
    double c2 = 0.0;
    std::size_t fitted_points = 0;
    std::vector<DaviesPoint> holdout;
    double worst_holdout = 0.0;  // max value / bound over held-out points
    bool pass = false;
    Record to_record() const;
};

/// Fits c1 per c2 on `fit` samples (smallest c1 making the minimized bound dominate), keeps
/// the c2 with the smallest mean log slack, and checks dominance on `holdout`.
DaviesFit fit_davies(const std::vector<DensitySample>& fit, const std::vector<DensitySample>& holdout, double lambda,
                     double delta, int d, const std::vector<double>& c2_grid);

}  // namespace jdlab
