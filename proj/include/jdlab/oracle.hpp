#pragma once

// Deterministic ground truth on a truncated lattice (d = 1, 2): a symmetric rate structure
// for the generator, heat vectors by uniformization, killed kernels and discrete versions of
// the functional inequalities.

#include "jdlab/kernels.hpp"
#include "jdlab/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace jdlab {

struct LatticeOptions {
    double h = 0.05;
    double eps_cell = 0.0;  // 0 selects 1.5 h
    Vec box_lo;             // lower corner
    Vec box_hi;             // upper corner
    int threads = 1;
};

/// Continuous-time Markov chain generator on lattice nodes. Off-diagonal rates are stored
/// once per unordered pair and mirrored, so q(i, j) == q(j, i) bit for bit. Each node also
/// carries a leak rate to the outside of the node set (absorbing boundary).
class LatticeGenerator {
public:
    static LatticeGenerator build(const Model& model, const LatticeOptions& opt);

    int dim() const noexcept { return d_; }
    double h() const noexcept { return h_; }
    double eps_cell() const noexcept { return eps_cell_; }
    std::size_t size() const noexcept { return coords_.size(); }
    const std::vector<Vec>& coords() const noexcept { return coords_; }
    const Vec& coord(std::size_t i) const { return coords_[i]; }
    /// Node nearest to x (ties to the lower index).
    std::size_t nearest(const Vec& x) const;
    double cell_volume() const;

    /// Total out-rate of node i (within the node set plus leak).
    double out_rate(std::size_t i) const { return diag_[i]; }
    double leak_rate(std::size_t i) const { return leak_[i]; }
    double max_rate() const;
    /// q(i, j) for i != j (0 when absent).
    double rate(std::size_t i, std::size_t j) const;
    /// Off-diagonal rate split into its diffusion and jump contributions.
    void rate_parts(std::size_t i, std::size_t j, double& diffusion, double& jump) const;

    /// y = x (I + Q / m) for the symmetric generator Q (row vector convention).
    void step(const std::vector<double>& x, std::vector<double>& y, double m) const;

    /// Sub-generator on the nodes with mask[i] true: rates to removed nodes become leak.
    LatticeGenerator restrict(const std::vector<bool>& mask) const;
    /// Nodes strictly inside the ball B(center, radius).
    LatticeGenerator restrict_to_ball(const Vec& center, double radius) const;

    /// Indices of this generator's nodes in the generator it was restricted from.
    const std::vector<std::size_t>& parent_index() const noexcept { return parent_index_; }

    /// Discrete forms: E(f, f) split into parts, and the discrete H^1 energy.
    struct FormValues {
        double diffusion = 0.0;
        double jump = 0.0;
        double killing = 0.0;
        double gradient = 0.0;  // sum over axis edges of h^d ((f_i - f_j) / h)^2
        double l2 = 0.0;        // h^d sum f_i^2
        double total() const { return diffusion + jump + killing; }
    };
    FormValues forms(const std::vector<double>& f) const;

    /// Largest relative mismatch |q(i,j) - q(j,i)| over stored pairs (0 by construction).
    double asymmetry() const;

    std::string summary() const;
    double expected_leak_budget(double t) const;

private:
    int d_ = 1;
    double h_ = 0.05;
    double eps_cell_ = 0.075;
    std::vector<Vec> coords_;
    // CSR, rows hold both directions of each pair
    std::vector<std::size_t> row_ptr_;
    std::vector<std::uint32_t> col_;
    std::vector<double> val_;       // total rate
    std::vector<double> val_diff_;  // diffusion part
    std::vector<double> diag_;
    std::vector<double> leak_;
    std::vector<std::size_t> parent_index_;
    // lattice geometry for nearest-node lookup
    Vec origin_;
    int n_[2] = {1, 1};
    std::vector<std::int64_t> grid_to_node_;  // -1 for removed nodes
};

/// Density approximation p(t, x0, .) on the nodes (values already divided by h^d).
struct HeatVector {
    double t = 0.0;
    std::size_t base = 0;
    std::vector<double> values;
    double leaked = 0.0;
    double truncation = 0.0;  // Poisson tail mass not summed
    double mass(double cell) const;
};

struct EvolveOptions {
    double tol = 1e-12;
    double max_steps = 5e7;
};

/// Semigroup applied to the point mass at x0 for each requested time, sharing one
/// uniformization sweep.
std::vector<HeatVector> evolve_many(const LatticeGenerator& g, std::size_t x0, const std::vector<double>& times,
                                    const EvolveOptions& opt = {});
HeatVector evolve(const LatticeGenerator& g, std::size_t x0, double t, const EvolveOptions& opt = {});

/// Semigroup applied to a general initial measure (node masses, not densities). Returned
/// values are densities.
HeatVector evolve_measure(const LatticeGenerator& g, const std::vector<double>& masses, double t,
                          const EvolveOptions& opt = {});

/// Kernel of the process killed on leaving B(center, radius); values indexed by the full
/// generator's nodes (0 outside the ball).
HeatVector killed_kernel(const LatticeGenerator& g, const Vec& center, double radius, std::size_t x0, double t,
                         const EvolveOptions& opt = {});

/// Worst relative error of p(t+s, x0, .) against sum_z p(t, x0, z) p(s, z, .) h^d over
/// nodes with density above `floor`.
double chapman_kolmogorov_check(const LatticeGenerator& g, std::size_t x0, double t, double s,
                                const EvolveOptions& opt = {}, double floor = 1e-8);

struct FormComparability {
    double ratio_low = 0.0;   // min E(f,f) / (grad + l2)
    double ratio_high = 0.0;  // max
    double diffusion_ratio_low = 0.0;   // min 2 E_diff / grad
    double diffusion_ratio_high = 0.0;  // max
    std::size_t used = 0;
};

FormComparability form_comparability_check(const LatticeGenerator& g,
                                           const std::vector<std::function<double(const Vec&)>>& tests);

struct PoincareResult {
    double realized = 0.0;  // max over test functions
    std::size_t used = 0;   // constants skipped
    double a1 = 0.0;
    std::vector<double> per_function;
};

/// Weighted Poincare ratio [sum (u - u_Psi)^2 Psi] / [r^2 sum |grad u|^2 Psi] on the lattice
/// h = r / nodes_per_radius inside B(x0, r), Psi = (1 - |x - x0| / r)_+^{a1}, a1 = 12 / (2 - beta).
PoincareResult weighted_poincare_check(const Vec& x0, double r, double beta,
                                       const std::vector<std::function<double(const Vec&)>>& tests,
                                       int nodes_per_radius = 40);

/// Best constant of the same discrete inequality (generalized eigenvalue), d = 1 only.
double weighted_poincare_optimal(double r, double beta, int nodes_per_radius = 40);

}  // namespace jdlab
