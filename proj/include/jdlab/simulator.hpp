#pragma once

// Path simulation: Euler-Maruyama for the diffusion part with small jumps folded into the
// drift and covariance, plus big jumps added at a state-dependent rate by thinning a
// Poisson stream of proposals drawn from the radial majorant.

#include "jdlab/kernels.hpp"
#include "jdlab/rng.hpp"
#include "jdlab/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace jdlab {

struct Ball {
    Vec center;
    double radius = 1.0;
};

struct SimConfig {
    double dt = 1e-3;
    double eps = 0.05;           // small-jump cutoff
    double r_max = 0.0;          // big-jump cap; 0 selects the automatic value
    std::uint64_t seed = 0;      // master seed
    std::uint64_t stream = 0;    // substream family
    std::size_t max_events = 100000;
    std::optional<Ball> kill;    // absorb on leaving this ball
    double rate_budget = 0.1;    // dt * sup Lambda_eps must not exceed this
    bool bridge = false;         // Brownian-bridge exit correction
    bool log_events = false;     // keep per-jump records
    int threads = 1;
};

/// Cap where the tail rate times the horizon falls below `level`, from the declared envelope
/// Lambda_R <= kappa_up |S^{d-1}| c / (beta1 phi(R)).
double default_r_max(const JumpKernel& j, double horizon, double level = 1e-4);

/// Upper bound on sup_x Lambda_eps(x) from the kernel's radial majorant.
double majorant_rate(const JumpKernel& j, double eps);

/// Radial proposal law with density proportional to 1 / (rho phi^(rho)) on (eps, inf), where
/// phi^ is the log-log interpolant of phi on a table (power-law beyond the table) and lies below
/// phi up to the factor (1 + slack).
class RadialSampler {
public:
    RadialSampler() = default;
    RadialSampler(const ScaleFunction& phi, double eps, double r_table, int per_decade = 64);
    /// int_eps^inf drho / (rho phi^(rho)).
    double mass() const noexcept { return total_; }
    double sample(Engine& rng) const;
    /// 1 / phi^(rho), the proposal's radial shape.
    double inv_phi_hat(double rho) const;
    double slack() const noexcept { return slack_; }
    /// Radial CDF of the proposal.
    double cdf(double rho) const;

private:
    double eps_ = 0.0;
    std::vector<double> log_r_;
    std::vector<double> log_phi_;
    std::vector<double> gamma_;    // local exponent per segment; last entry is the tail
    std::vector<double> cum_;      // cumulative mass at table nodes
    double total_ = 0.0;
    double slack_ = 0.0;
};

/// Small-jump corrections m_eps(x), C_eps(x); constant for translation-invariant kernels,
/// interpolated from a grid otherwise.
class MomentField {
public:
    MomentField() = default;
    MomentField(const JumpKernel& j, double eps, const Vec& center, double half_width, double spacing, int threads);
    void at(const Vec& x, Vec& mean, Mat& second) const;

private:
    int d_ = 1;
    bool constant_ = true;
    Vec m0_;
    Mat c0_;
    Vec lo_;
    double spacing_ = 1.0;
    int n_ = 0;
    std::vector<Vec> means_;
    std::vector<Mat> seconds_;
};

/// Displacement z with density proportional to J(x, x + z) on {eps < |z| <= cap}, by
/// rejection from the majorant. Throws ModelError when J exceeds the majorant and
/// NumericError after `max_tries` rejections.
Vec sample_big_jump(const JumpKernel& j, const Vec& x, double eps, double cap, Engine& rng,
                    const RadialSampler* sampler = nullptr, std::size_t max_tries = 1000000);

/// Uniform direction on S^{d-1}.
Vec uniform_direction(int d, Engine& rng);

struct JumpEvent {
    double time = 0.0;
    Vec from;
    Vec to;
};

struct PathRecord {
    std::vector<Vec> positions;      // at the requested times (last known position if stopped)
    std::vector<double> exit_time;   // per monitored radius; NaN when not exited by the horizon
    std::vector<Vec> exit_position;
    std::vector<JumpEvent> events;   // only when log_events
    std::size_t jumps = 0;
    bool killed = false;
    double killed_time = 0.0;
    bool truncated = false;          // a jump beyond r_max was drawn; path stopped there
    double truncated_time = 0.0;
    bool budget_exceeded = false;
};

struct PathEnsemble {
    Vec x0;
    double horizon = 0.0;
    std::vector<double> times;
    Vec monitor_center;
    std::vector<double> radii;
    SimConfig config;
    double r_max = 0.0;
    double proposal_rate = 0.0;      // majorant rate of big-jump proposals
    std::vector<PathRecord> paths;

    double truncated_fraction() const;
    double killed_fraction() const;
    double alive_fraction() const;
    /// Coordinates of the positions at times[k] over paths that were not stopped early.
    std::vector<Vec> positions_at(std::size_t k, bool alive_only = true) const;
    /// FNV-1a fingerprint of every recorded double and flag.
    std::uint64_t fingerprint() const;
    /// One row per path: terminal position, exit times, event counts, flags.
    std::string to_csv() const;
};

/// Options for monitoring exits from balls around `monitor_center` (x0 when empty); with
/// `stop_after_exit` set and no requested times past the exit, paths stop once they have
/// left the largest ball.
struct MonitorOptions {
    std::vector<double> radii;
    Vec center;
    bool stop_after_exit = false;
};

PathEnsemble simulate_paths(const Model& model, const Vec& x0, double horizon, const std::vector<double>& times,
                            const SimConfig& config, std::size_t n, const MonitorOptions& monitor = {});

struct ExitRadius {
    double radius = 0.0;
    double mean = 0.0;
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t exited = 0;
    std::size_t n = 0;
    double confined_fraction = 0.0;  // P(sup_{s <= a r^2} |X_s - x0| <= r)
    std::vector<double> histogram;   // exit |X - x0| / r in bins of width 0.25 over [1, 3], last bin open
    bool usable = true;
};

/// Mean exit times from B(x0, r) with CLT intervals. `confine_a` sets the time a r^2 of the
/// confinement check.
/// Each radius runs as its own ensemble (stream = radius index). When `dt_per_r2` > 0 the
/// step is dt_per_r2 * r^2 for that radius instead of config.dt.
std::vector<ExitRadius> exit_statistics(const Model& model, const Vec& x0, const std::vector<double>& radii,
                                        const SimConfig& config, std::size_t n, double confine_a = 0.1,
                                        double horizon_factor = 20.0, double dt_per_r2 = 0.0);

struct HittingTail {
    double s = 0.0;
    double p = 0.0;
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t hits = 0;
    std::size_t exits = 0;
    double bound_shape = 0.0;  // r^2 / (s ^ 1)^2
};

/// P_x(X at the exit from B(x, r) lies outside B(x, s)) for each s.
std::vector<HittingTail> hitting_tail(const Model& model, const Vec& x, double r, const std::vector<double>& s_list,
                                      const SimConfig& config, std::size_t n, double horizon_factor = 50.0);

struct LevySystemReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double lhs_se = 0.0;
    double rhs_se = 0.0;
    double discrepancy = 0.0;
    double z = 0.0;  // |lhs - rhs| / joint standard error
};

/// Sum of f(X_{s-}, X_s) over jumps before leaving `ball` against the time integral of
/// int_{|y - X_s| > eps} f(X_s, y) J(X_s, y) dy, both averaged over paths.
LevySystemReport levy_system_check(const Model& model, const Vec& x, const Ball& ball,
                                   const std::function<double(const Vec&, const Vec&)>& f, const SimConfig& config,
                                   std::size_t n, double horizon = 10.0);

}  // namespace jdlab
