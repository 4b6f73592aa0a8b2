#include "jdlab/oracle.hpp"

#include "jdlab/parallel.hpp"
#include "jdlab/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

namespace jdlab {

namespace {

struct PairRate {
    std::uint32_t j;
    double total;
    double diffusion;
};

// Rate of jumping from the cell centred at the origin into the cell centred at `offset`,
// for a radial kernel: int over the target cell of J(0, z) dz.
double radial_cell_rate(const JumpKernel& k, const Vec& offset, double h, int order) {
    const int d = k.dim();
    const quad::Rule& gl = quad::gauss_legendre(order);
    const Vec origin = Vec::Zero(d);
    double s = 0.0;
    if (d == 1) {
        for (int a = 0; a < order; ++a) {
            Vec z = offset;
            z(0) += 0.5 * h * gl.nodes[a];
            s += gl.weights[a] * k(origin, z);
        }
        return s * 0.5 * h;
    }
    for (int a = 0; a < order; ++a) {
        for (int b = 0; b < order; ++b) {
            Vec z = offset;
            z(0) += 0.5 * h * gl.nodes[a];
            z(1) += 0.5 * h * gl.nodes[b];
            s += gl.weights[a] * gl.weights[b] * k(origin, z);
        }
    }
    return s * 0.25 * h * h;
}

// int over the cell around y of J(x, .), d in {1, 2}
double cell_rate(const JumpKernel& k, const Vec& x, const Vec& y, double h, int order) {
    const int d = k.dim();
    const quad::Rule& gl = quad::gauss_legendre(order);
    double s = 0.0;
    if (d == 1) {
        for (int a = 0; a < order; ++a) {
            Vec z = y;
            z(0) += 0.5 * h * gl.nodes[a];
            s += gl.weights[a] * k(x, z);
        }
        return s * 0.5 * h;
    }
    for (int a = 0; a < order; ++a) {
        for (int b = 0; b < order; ++b) {
            Vec z = y;
            z(0) += 0.5 * h * gl.nodes[a];
            z(1) += 0.5 * h * gl.nodes[b];
            s += gl.weights[a] * gl.weights[b] * k(x, z);
        }
    }
    return s * 0.25 * h * h;
}

}  // namespace

double HeatVector::mass(double cell) const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * cell;
}

double LatticeGenerator::cell_volume() const { return std::pow(h_, d_); }

double LatticeGenerator::max_rate() const {
    double m = 0.0;
    for (double v : diag_) m = std::max(m, v);
    return m;
}

std::size_t LatticeGenerator::nearest(const Vec& x) const {
    std::int64_t idx = 0;
    std::int64_t stride = 1;
    for (int k = 0; k < d_; ++k) {
        const double u = std::round((x(k) - origin_(k)) / h_);
        const std::int64_t i = std::clamp<std::int64_t>(static_cast<std::int64_t>(u), 0, n_[k] - 1);
        idx += i * stride;
        stride *= n_[k];
    }
    const std::int64_t node = grid_to_node_[static_cast<std::size_t>(idx)];
    if (node >= 0) return static_cast<std::size_t>(node);
    // removed grid point: fall back to a scan
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < coords_.size(); ++i) {
        const double dd = (coords_[i] - x).squaredNorm();
        if (dd < bd) {
            bd = dd;
            best = i;
        }
    }
    return best;
}

double LatticeGenerator::rate(std::size_t i, std::size_t j) const {
    for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
        if (col_[p] == j) return val_[p];
    return 0.0;
}

void LatticeGenerator::rate_parts(std::size_t i, std::size_t j, double& diffusion, double& jump) const {
    diffusion = 0.0;
    jump = 0.0;
    for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        if (col_[p] == j) {
            diffusion = val_diff_[p];
            jump = val_[p] - val_diff_[p];
            return;
        }
    }
}

LatticeGenerator LatticeGenerator::build(const Model& model, const LatticeOptions& opt) {
    const int d = model.d;
    if (d < 1 || d > 2) throw ConfigError("lattice oracle supports d = 1 or 2");
    if (!(opt.h > 0.0)) throw ConfigError("lattice spacing must be positive");
    if (opt.box_lo.size() != d || opt.box_hi.size() != d) throw ConfigError("lattice box has the wrong dimension");
    const double h = opt.h;
    const double eps = opt.eps_cell > 0.0 ? opt.eps_cell : 1.5 * h;
    if (eps < 0.5 * h - 1e-15 || eps > 2.0 * h + 1e-15) throw ConfigError("eps_cell must lie in [h/2, 2h]");

    LatticeGenerator g;
    g.d_ = d;
    g.h_ = h;
    g.eps_cell_ = eps;
    g.origin_ = opt.box_lo;
    for (int k = 0; k < d; ++k) {
        const double span = opt.box_hi(k) - opt.box_lo(k);
        if (!(span > 0.0)) throw ConfigError("lattice box is empty");
        g.n_[k] = static_cast<int>(std::llround(span / h)) + 1;
        if (g.n_[k] < 3) throw ConfigError("lattice box must contain at least three nodes per axis");
    }
    const std::size_t n = static_cast<std::size_t>(g.n_[0]) * static_cast<std::size_t>(d == 2 ? g.n_[1] : 1);
    if (!model.kernel.is_zero() && n > 3500)
        throw ConfigError("lattice with jumps has " + std::to_string(n) + " nodes; use a larger h or a smaller box");
    g.coords_.resize(n);
    g.grid_to_node_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec x(d);
        x(0) = opt.box_lo(0) + h * static_cast<double>(i % g.n_[0]);
        if (d == 2) x(1) = opt.box_lo(1) + h * static_cast<double>(i / g.n_[0]);
        g.coords_[i] = x;
        g.grid_to_node_[i] = static_cast<std::int64_t>(i);
        g.parent_index_.push_back(i);
    }
    const auto grid_index = [&](std::int64_t a, std::int64_t b) -> std::int64_t {
        if (a < 0 || a >= g.n_[0]) return -1;
        if (d == 1) return a;
        if (b < 0 || b >= g.n_[1]) return -1;
        return a + b * g.n_[0];
    };

    const JumpKernel& kern = model.kernel;
    const bool radial = kern.radial();
    std::optional<Mat> c_inv;
    if (!kern.is_zero() && radial) c_inv = small_jump_moments(kern, Vec::Zero(d), eps).second;
    // sub-cell second moments at the nodes; edge midpoints use the endpoint average
    std::vector<Mat> c_node;
    if (!kern.is_zero() && !radial) {
        c_node.resize(n);
        const RadialRule light{4, 8, 16};
        parallel_for(n, opt.threads,
                     [&](std::size_t i) { c_node[i] = small_jump_moments(kern, g.coords_[i], eps, light).second; });
    }
    const auto jump_second = [&](std::size_t i, std::int64_t j) -> Mat {
        if (kern.is_zero()) return Mat::Zero(d, d);
        if (radial) return *c_inv;
        if (j < 0) return c_node[i];
        return 0.5 * (c_node[i] + c_node[static_cast<std::size_t>(j)]);
    };

    std::vector<std::vector<PairRate>> rows(n);
    std::vector<double> leak(n, 0.0);

    // diffusion part: nearest-neighbour (and for d = 2 diagonal) conductances at edge midpoints
    const auto edge_rates = [&](std::size_t i, std::int64_t j, const Vec& xb, int kind) {
        // kind: 0 = axis 0, 1 = axis 1, 2 = diagonal (+,+), 3 = anti-diagonal (+,-)
        const Vec mid = 0.5 * (g.coords_[i] + xb);
        const Mat b = 0.5 * (model.diffusion(mid) + jump_second(i, j));
        if (d == 1) return b(0, 0) / (h * h);
        const double off = b(0, 1);
        double r = 0.0;
        switch (kind) {
            case 0: r = (b(0, 0) - std::abs(off)) / (h * h); break;
            case 1: r = (b(1, 1) - std::abs(off)) / (h * h); break;
            case 2: r = off > 0.0 ? off / (h * h) : 0.0; break;
            case 3: r = off < 0.0 ? -off / (h * h) : 0.0; break;
        }
        if (r < -1e-14) {
            std::ostringstream ss;
            ss << "negative conductance " << r << " at " << mid.transpose()
               << ": the 8-point stencil needs |a12| <= min(a11, a22)";
            throw ConfigError(ss.str());
        }
        return std::max(r, 0.0);
    };
    struct Dir {
        int da, db, kind;
    };
    std::vector<Dir> dirs;
    if (d == 1) {
        dirs = {{1, 0, 0}, {-1, 0, 0}};
    } else {
        dirs = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 1}, {0, -1, 1}, {1, 1, 2}, {-1, -1, 2}, {1, -1, 3}, {-1, 1, 3}};
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t a = static_cast<std::int64_t>(i % g.n_[0]);
        const std::int64_t b = d == 2 ? static_cast<std::int64_t>(i / g.n_[0]) : 0;
        for (const Dir& dir : dirs) {
            const std::int64_t j = grid_index(a + dir.da, b + dir.db);
            Vec xb = g.coords_[i];
            xb(0) += dir.da * h;
            if (d == 2) xb(1) += dir.db * h;
            if (j < 0) {
                leak[i] += edge_rates(i, j, xb, dir.kind);
                continue;
            }
            if (static_cast<std::size_t>(j) < i) continue;  // store each pair once
            const double r = edge_rates(i, j, xb, dir.kind);
            if (r > 0.0) rows[i].push_back({static_cast<std::uint32_t>(j), r, r});
        }
    }

    // jump part beyond the folded cell
    if (!kern.is_zero()) {
        const double eps2 = eps * eps;
        if (radial) {
            // rate per lattice offset, computed once
            const int span0 = g.n_[0];
            const int span1 = d == 2 ? g.n_[1] : 1;
            std::vector<double> table(static_cast<std::size_t>(span0) * span1, 0.0);
            for (int b = 0; b < span1; ++b) {
                for (int a = 0; a < span0; ++a) {
                    Vec off(d);
                    off(0) = a * h;
                    if (d == 2) off(1) = b * h;
                    if (off.squaredNorm() <= eps2) continue;
                    const int order = off.norm() < 4.0 * h ? 12 : 6;
                    table[static_cast<std::size_t>(a) + static_cast<std::size_t>(b) * span0] =
                        radial_cell_rate(kern, off, h, order);
                }
            }
            // total over the infinite lattice: in-table offsets (all quadrants) plus the far tail
            const double reach = h * (std::min(span0, span1 == 1 ? span0 : span1) - 0.5);
            double infinite = 0.0;
            for (int b = -(span1 - 1); b <= span1 - 1; ++b) {
                for (int a = -(span0 - 1); a <= span0 - 1; ++a) {
                    const double rr = h * std::hypot(static_cast<double>(a), static_cast<double>(b));
                    if (rr > reach) continue;
                    infinite += table[static_cast<std::size_t>(std::abs(a)) + static_cast<std::size_t>(std::abs(b)) * span0];
                }
            }
            infinite += jump_intensity_tail(kern, Vec::Zero(d), reach);
            std::vector<double> rowsum(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const std::int64_t ai = static_cast<std::int64_t>(i % g.n_[0]);
                const std::int64_t bi = d == 2 ? static_cast<std::int64_t>(i / g.n_[0]) : 0;
                for (std::size_t j = i + 1; j < n; ++j) {
                    const std::int64_t aj = static_cast<std::int64_t>(j % g.n_[0]);
                    const std::int64_t bj = d == 2 ? static_cast<std::int64_t>(j / g.n_[0]) : 0;
                    const double r = table[static_cast<std::size_t>(std::abs(aj - ai)) +
                                           static_cast<std::size_t>(std::abs(bj - bi)) * span0];
                    if (r <= 0.0) continue;
                    rowsum[i] += r;
                    rowsum[j] += r;
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                const std::int64_t ai = static_cast<std::int64_t>(i % g.n_[0]);
                const std::int64_t bi = d == 2 ? static_cast<std::int64_t>(i / g.n_[0]) : 0;
                auto& row = rows[i];
                // merge with the diffusion entries already present for this row
                std::vector<PairRate> merged;
                merged.reserve(n - i);
                std::size_t p = 0;
                std::sort(row.begin(), row.end(), [](const PairRate& x, const PairRate& y) { return x.j < y.j; });
                for (std::size_t j = i + 1; j < n; ++j) {
                    const std::int64_t aj = static_cast<std::int64_t>(j % g.n_[0]);
                    const std::int64_t bj = d == 2 ? static_cast<std::int64_t>(j / g.n_[0]) : 0;
                    const double r = table[static_cast<std::size_t>(std::abs(aj - ai)) +
                                           static_cast<std::size_t>(std::abs(bj - bi)) * span0];
                    PairRate e{static_cast<std::uint32_t>(j), r, 0.0};
                    if (p < row.size() && row[p].j == j) {
                        e.total += row[p].total;
                        e.diffusion = row[p].diffusion;
                        ++p;
                    }
                    if (e.total > 0.0) merged.push_back(e);
                }
                row.swap(merged);
                leak[i] += std::max(0.0, infinite - rowsum[i]);
            }
        } else {
            std::vector<std::vector<PairRate>> jump_rows(n);
            std::vector<double> lambda(n, 0.0);
            parallel_for(n, opt.threads, [&](std::size_t i) {
                lambda[i] = jump_intensity_tail(kern, g.coords_[i], eps);
                for (std::size_t j = i + 1; j < n; ++j) {
                    if ((g.coords_[j] - g.coords_[i]).squaredNorm() <= eps2) continue;
                    const double r = 0.5 * (cell_rate(kern, g.coords_[i], g.coords_[j], h, 4) +
                                            cell_rate(kern, g.coords_[j], g.coords_[i], h, 4));
                    if (r > 0.0) jump_rows[i].push_back({static_cast<std::uint32_t>(j), r, 0.0});
                }
            });
            std::vector<double> rowsum(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (const auto& e : jump_rows[i]) {
                    rowsum[i] += e.total;
                    rowsum[e.j] += e.total;
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                auto& row = rows[i];
                std::sort(row.begin(), row.end(), [](const PairRate& x, const PairRate& y) { return x.j < y.j; });
                std::vector<PairRate> merged;
                std::size_t p = 0;
                for (const auto& e0 : jump_rows[i]) {
                    while (p < row.size() && row[p].j < e0.j) merged.push_back(row[p++]);
                    PairRate e = e0;
                    if (p < row.size() && row[p].j == e.j) {
                        e.total += row[p].total;
                        e.diffusion = row[p].diffusion;
                        ++p;
                    }
                    merged.push_back(e);
                }
                while (p < row.size()) merged.push_back(row[p++]);
                row.swap(merged);
                leak[i] += std::max(0.0, lambda[i] - rowsum[i]);
            }
        }
    }

    // mirror into CSR
    std::vector<std::size_t> count(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        count[i] += rows[i].size();
        for (const auto& e : rows[i]) count[e.j] += 1;
    }
    g.row_ptr_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) g.row_ptr_[i + 1] = g.row_ptr_[i] + count[i];
    g.col_.resize(g.row_ptr_[n]);
    g.val_.resize(g.row_ptr_[n]);
    g.val_diff_.resize(g.row_ptr_[n]);
    std::vector<std::size_t> fill(g.row_ptr_.begin(), g.row_ptr_.end() - 1);
    // lower-triangle entries first in column order, then the upper ones: rows end up sorted
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& e : rows[i]) {
            const std::size_t p = fill[e.j]++;
            g.col_[p] = static_cast<std::uint32_t>(i);
            g.val_[p] = e.total;
            g.val_diff_[p] = e.diffusion;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& e : rows[i]) {
            const std::size_t p = fill[i]++;
            g.col_[p] = e.j;
            g.val_[p] = e.total;
            g.val_diff_[p] = e.diffusion;
        }
    }
    g.diag_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = leak[i];
        for (std::size_t p = g.row_ptr_[i]; p < g.row_ptr_[i + 1]; ++p) s += g.val_[p];
        g.diag_[i] = s;
    }
    g.leak_ = std::move(leak);
    return g;
}

void LatticeGenerator::step(const std::vector<double>& x, std::vector<double>& y, double m) const {
    const std::size_t n = coords_.size();
    y.resize(n);
    const double inv = 1.0 / m;
    for (std::size_t i = 0; i < n; ++i) {
        double s = x[i] * (1.0 - diag_[i] * inv);
        double acc = 0.0;
        for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) acc += val_[p] * x[col_[p]];
        y[i] = s + acc * inv;
    }
}

LatticeGenerator LatticeGenerator::restrict(const std::vector<bool>& mask) const {
    const std::size_t n = coords_.size();
    if (mask.size() != n) throw ValidationError("restrict: mask size mismatch");
    LatticeGenerator g;
    g.d_ = d_;
    g.h_ = h_;
    g.eps_cell_ = eps_cell_;
    g.origin_ = origin_;
    g.n_[0] = n_[0];
    g.n_[1] = n_[1];
    std::vector<std::int64_t> remap(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        remap[i] = static_cast<std::int64_t>(g.coords_.size());
        g.coords_.push_back(coords_[i]);
        g.parent_index_.push_back(i);
    }
    g.grid_to_node_.assign(grid_to_node_.size(), -1);
    for (std::size_t k = 0; k < grid_to_node_.size(); ++k) {
        const std::int64_t old = grid_to_node_[k];
        if (old >= 0) g.grid_to_node_[k] = remap[static_cast<std::size_t>(old)];
    }
    g.row_ptr_.push_back(0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        double lost = 0.0;
        for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
            const std::int64_t j = remap[col_[p]];
            if (j < 0) {
                lost += val_[p];
                continue;
            }
            g.col_.push_back(static_cast<std::uint32_t>(j));
            g.val_.push_back(val_[p]);
            g.val_diff_.push_back(val_diff_[p]);
        }
        g.row_ptr_.push_back(g.col_.size());
        g.diag_.push_back(diag_[i]);
        g.leak_.push_back(leak_[i] + lost);
    }
    return g;
}

LatticeGenerator LatticeGenerator::restrict_to_ball(const Vec& center, double radius) const {
    std::vector<bool> mask(coords_.size());
    for (std::size_t i = 0; i < coords_.size(); ++i) mask[i] = (coords_[i] - center).norm() < radius;
    return restrict(mask);
}

LatticeGenerator::FormValues LatticeGenerator::forms(const std::vector<double>& f) const {
    FormValues out;
    const double cell = cell_volume();
    for (std::size_t i = 0; i < coords_.size(); ++i) {
        out.l2 += cell * f[i] * f[i];
        out.killing += cell * leak_[i] * f[i] * f[i];
        for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
            const std::size_t j = col_[p];
            if (j <= i) continue;
            const double df = f[i] - f[j];
            out.diffusion += cell * val_diff_[p] * df * df;
            out.jump += cell * (val_[p] - val_diff_[p]) * df * df;
            const Vec dx = coords_[j] - coords_[i];
            if (std::abs(dx.norm() - h_) < 1e-9 * h_ && (dx.array().abs() > 0.5 * h_).count() == 1)
                out.gradient += cell * (df / h_) * (df / h_);
        }
    }
    return out;
}

double LatticeGenerator::asymmetry() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < coords_.size(); ++i) {
        for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
            const double back = rate(col_[p], i);
            const double m = std::max(std::abs(back), std::abs(val_[p]));
            if (m > 0.0) worst = std::max(worst, std::abs(back - val_[p]) / m);
        }
    }
    return worst;
}

double LatticeGenerator::expected_leak_budget(double t) const {
    double m = 0.0;
    for (double l : leak_) m = std::max(m, l);
    return m * t;
}

std::string LatticeGenerator::summary() const {
    std::ostringstream ss;
    ss << "nodes = " << coords_.size() << "\n"
       << "dimension = " << d_ << "\n"
       << "h = " << format_double(h_) << "\n"
       << "eps_cell = " << format_double(eps_cell_) << "\n"
       << "max_rate = " << format_double(max_rate()) << "\n"
       << "stored_rates = " << val_.size() << "\n"
       << "leak_rate_max = " << format_double(expected_leak_budget(1.0)) << "\n";
    return ss.str();
}

// ---------------------------------------------------------------- uniformization

namespace {

struct PoissonWeights {
    std::vector<double> w;  // w[k] = P(N = k)
    std::size_t right = 0;  // last index summed
    double tail = 0.0;      // P(N > right)
};

PoissonWeights poisson_weights(double lambda, double tol, double max_steps) {
    PoissonWeights pw;
    if (lambda == 0.0) {
        pw.w = {1.0};
        return pw;
    }
    if (lambda + 10.0 * std::sqrt(lambda) + 50.0 > max_steps) {
        std::ostringstream ss;
        ss << "uniformization needs about " << lambda << " steps (limit " << max_steps
           << "); increase h or shorten t";
        throw ConfigError(ss.str());
    }
    // P(N > k) via the complement of the running sum would lose precision near 1; sum the
    // tail from the top instead once the weights are known.
    const double log_lambda = std::log(lambda);
    const std::size_t cap = static_cast<std::size_t>(lambda + 40.0 * std::sqrt(lambda) + 200.0);
    pw.w.resize(cap + 1);
    for (std::size_t k = 0; k <= cap; ++k)
        pw.w[k] = std::exp(-lambda + static_cast<double>(k) * log_lambda - std::lgamma(static_cast<double>(k) + 1.0));
    double tail = 0.0;
    std::size_t right = cap;
    for (std::size_t k = cap; k > 0; --k) {
        if (k < lambda) {
            right = k;
            break;
        }
        if (tail + pw.w[k] >= tol) {
            right = k;
            break;
        }
        tail += pw.w[k];
    }
    pw.right = right;
    pw.tail = tail;
    pw.w.resize(right + 1);
    return pw;
}

}  // namespace

std::vector<HeatVector> evolve_many(const LatticeGenerator& g, std::size_t x0, const std::vector<double>& times,
                                    const EvolveOptions& opt) {
    if (x0 >= g.size()) throw DomainError("evolve: base node out of range");
    std::vector<double> init(g.size(), 0.0);
    init[x0] = 1.0;
    std::vector<HeatVector> out;
    for (double t : times) {
        if (!(t >= 0.0)) throw DomainError("evolve: t must be non-negative");
    }
    const double m = std::max(g.max_rate(), 1e-300);
    std::vector<PoissonWeights> weights;
    std::size_t kmax = 0;
    for (double t : times) {
        weights.push_back(poisson_weights(g.max_rate() > 0.0 ? m * t : 0.0, opt.tol, opt.max_steps));
        kmax = std::max(kmax, weights.back().right);
    }
    const std::size_t n = g.size();
    std::vector<std::vector<double>> acc(times.size(), std::vector<double>(n, 0.0));
    std::vector<double> leaked(times.size(), 0.0);
    // survival[k] of the Poisson clock for each time: P(N >= k + 1)
    std::vector<double> surv(times.size());
    for (std::size_t a = 0; a < times.size(); ++a) {
        double s = weights[a].tail;
        for (double w : weights[a].w) s += w;
        surv[a] = s;  // P(N >= 0) up to the truncation
    }
    std::vector<double> v = init;
    std::vector<double> next;
    for (std::size_t k = 0; k <= kmax; ++k) {
        double leak_k = 0.0;
        for (std::size_t i = 0; i < n; ++i) leak_k += v[i] * g.leak_rate(i);
        leak_k /= m;
        for (std::size_t a = 0; a < times.size(); ++a) {
            if (k > weights[a].right) continue;
            const double w = weights[a].w[k];
            if (w > 0.0) {
                auto& dst = acc[a];
                for (std::size_t i = 0; i < n; ++i) dst[i] += w * v[i];
            }
            surv[a] -= w;  // now P(N >= k + 1)
            leaked[a] += std::max(surv[a], 0.0) * leak_k;
        }
        if (k < kmax) {
            g.step(v, next, m);
            v.swap(next);
        }
    }
    const double cell = g.cell_volume();
    for (std::size_t a = 0; a < times.size(); ++a) {
        HeatVector hv;
        hv.t = times[a];
        hv.base = x0;
        hv.values = std::move(acc[a]);
        for (double& val : hv.values) val /= cell;
        hv.leaked = leaked[a];
        hv.truncation = weights[a].tail;
        out.push_back(std::move(hv));
    }
    return out;
}

HeatVector evolve(const LatticeGenerator& g, std::size_t x0, double t, const EvolveOptions& opt) {
    return std::move(evolve_many(g, x0, {t}, opt).front());
}

HeatVector evolve_measure(const LatticeGenerator& g, const std::vector<double>& masses, double t,
                          const EvolveOptions& opt) {
    if (masses.size() != g.size()) throw ValidationError("evolve_measure: size mismatch");
    if (!(t >= 0.0)) throw DomainError("evolve: t must be non-negative");
    const double m = std::max(g.max_rate(), 1e-300);
    const auto pw = poisson_weights(g.max_rate() > 0.0 ? m * t : 0.0, opt.tol, opt.max_steps);
    const std::size_t n = g.size();
    std::vector<double> acc(n, 0.0);
    std::vector<double> v = masses;
    std::vector<double> next;
    double surv = pw.tail;
    for (double w : pw.w) surv += w;
    double leaked = 0.0;
    for (std::size_t k = 0; k <= pw.right; ++k) {
        double leak_k = 0.0;
        for (std::size_t i = 0; i < n; ++i) leak_k += v[i] * g.leak_rate(i);
        const double w = pw.w[k];
        for (std::size_t i = 0; i < n; ++i) acc[i] += w * v[i];
        surv -= w;
        leaked += std::max(surv, 0.0) * leak_k / m;
        if (k < pw.right) {
            g.step(v, next, m);
            v.swap(next);
        }
    }
    HeatVector hv;
    hv.t = t;
    hv.values = std::move(acc);
    for (double& val : hv.values) val /= g.cell_volume();
    hv.leaked = leaked;
    hv.truncation = pw.tail;
    return hv;
}

HeatVector killed_kernel(const LatticeGenerator& g, const Vec& center, double radius, std::size_t x0, double t,
                         const EvolveOptions& opt) {
    if ((g.coord(x0) - center).norm() >= radius) throw DomainError("killed_kernel: base node outside the ball");
    const LatticeGenerator sub = g.restrict_to_ball(center, radius);
    const auto& parent = sub.parent_index();
    const std::size_t local = static_cast<std::size_t>(std::find(parent.begin(), parent.end(), x0) - parent.begin());
    HeatVector local_hv = evolve(sub, local, t, opt);
    HeatVector hv;
    hv.t = t;
    hv.base = x0;
    hv.values.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < parent.size(); ++i) hv.values[parent[i]] = local_hv.values[i];
    hv.leaked = local_hv.leaked;
    hv.truncation = local_hv.truncation;
    return hv;
}

double chapman_kolmogorov_check(const LatticeGenerator& g, std::size_t x0, double t, double s,
                                const EvolveOptions& opt, double floor) {
    const auto both = evolve_many(g, x0, {t, t + s}, opt);
    std::vector<double> masses = both[0].values;
    for (double& v : masses) v *= g.cell_volume();
    const HeatVector composed = evolve_measure(g, masses, s, opt);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double a = both[1].values[i];
        if (a <= floor) continue;
        worst = std::max(worst, std::abs(a - composed.values[i]) / a);
    }
    return worst;
}

FormComparability form_comparability_check(const LatticeGenerator& g,
                                           const std::vector<std::function<double(const Vec&)>>& tests) {
    FormComparability out;
    out.ratio_low = out.diffusion_ratio_low = std::numeric_limits<double>::infinity();
    for (const auto& fn : tests) {
        std::vector<double> f(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) f[i] = fn(g.coord(i));
        const auto fv = g.forms(f);
        const double h1 = fv.gradient + fv.l2;
        if (!(h1 > 0.0)) continue;
        ++out.used;
        const double r = fv.total() / h1;
        out.ratio_low = std::min(out.ratio_low, r);
        out.ratio_high = std::max(out.ratio_high, r);
        if (fv.gradient > 0.0) {
            const double rd = 2.0 * fv.diffusion / fv.gradient;
            out.diffusion_ratio_low = std::min(out.diffusion_ratio_low, rd);
            out.diffusion_ratio_high = std::max(out.diffusion_ratio_high, rd);
        }
    }
    if (out.used == 0) out.ratio_low = out.diffusion_ratio_low = 0.0;
    return out;
}

namespace {

struct PoincareLattice {
    std::vector<Vec> nodes;
    std::vector<double> psi;  // normalized to unit mass (times cell volume)
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<double> edge_psi;
    double h = 0.0;
    double cell = 0.0;
};

PoincareLattice poincare_lattice(const Vec& x0, double r, double beta, int nodes_per_radius) {
    const int d = static_cast<int>(x0.size());
    if (d < 1 || d > 2) throw DomainError("weighted_poincare_check: d must be 1 or 2");
    if (!(beta > 0.0 && beta < 2.0)) throw DomainError("weighted_poincare_check: beta must lie in (0, 2)");
    PoincareLattice L;
    L.h = r / nodes_per_radius;
    L.cell = std::pow(L.h, d);
    const double a1 = 12.0 / (2.0 - beta);
    const int m = nodes_per_radius;
    std::vector<std::int64_t> index((2 * m + 1) * (d == 2 ? 2 * m + 1 : 1), -1);
    const auto weight = [&](const Vec& x) {
        const double u = 1.0 - (x - x0).norm() / r;
        return u > 0.0 ? std::pow(u, a1) : 0.0;
    };
    for (int b = (d == 2 ? -m : 0); b <= (d == 2 ? m : 0); ++b) {
        for (int a = -m; a <= m; ++a) {
            Vec x = x0;
            x(0) += a * L.h;
            if (d == 2) x(1) += b * L.h;
            if ((x - x0).norm() >= r) continue;
            index[static_cast<std::size_t>((a + m) + (d == 2 ? (b + m) * (2 * m + 1) : 0))] =
                static_cast<std::int64_t>(L.nodes.size());
            L.nodes.push_back(x);
            L.psi.push_back(weight(x));
        }
    }
    double total = 0.0;
    for (double p : L.psi) total += p * L.cell;
    for (double& p : L.psi) p /= total;
    for (int b = (d == 2 ? -m : 0); b <= (d == 2 ? m : 0); ++b) {
        for (int a = -m; a <= m; ++a) {
            const std::int64_t i = index[static_cast<std::size_t>((a + m) + (d == 2 ? (b + m) * (2 * m + 1) : 0))];
            if (i < 0) continue;
            const int nb = d == 2 ? 2 : 1;
            for (int axis = 0; axis < nb; ++axis) {
                const int a2 = a + (axis == 0 ? 1 : 0);
                const int b2 = b + (axis == 1 ? 1 : 0);
                if (a2 > m || b2 > m) continue;
                const std::int64_t j =
                    index[static_cast<std::size_t>((a2 + m) + (d == 2 ? (b2 + m) * (2 * m + 1) : 0))];
                if (j < 0) continue;
                L.edges.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
                L.edge_psi.push_back(weight(0.5 * (L.nodes[i] + L.nodes[j])) / total);
            }
        }
    }
    return L;
}

}  // namespace

PoincareResult weighted_poincare_check(const Vec& x0, double r, double beta,
                                       const std::vector<std::function<double(const Vec&)>>& tests,
                                       int nodes_per_radius) {
    const PoincareLattice L = poincare_lattice(x0, r, beta, nodes_per_radius);
    PoincareResult out;
    out.a1 = 12.0 / (2.0 - beta);
    for (const auto& fn : tests) {
        std::vector<double> u(L.nodes.size());
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = fn(L.nodes[i]);
        double mean = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) mean += u[i] * L.psi[i] * L.cell;
        double num = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) num += (u[i] - mean) * (u[i] - mean) * L.psi[i] * L.cell;
        double den = 0.0;
        for (std::size_t e = 0; e < L.edges.size(); ++e) {
            const double g = (u[L.edges[e].second] - u[L.edges[e].first]) / L.h;
            den += g * g * L.edge_psi[e] * L.cell;
        }
        den *= r * r;
        if (!(num > 1e-300) || !(den > 0.0)) {
            out.per_function.push_back(0.0);
            continue;
        }
        ++out.used;
        out.per_function.push_back(num / den);
        out.realized = std::max(out.realized, num / den);
    }
    return out;
}

double weighted_poincare_optimal(double r, double beta, int nodes_per_radius) {
    const PoincareLattice L = poincare_lattice(Vec::Zero(1), r, beta, nodes_per_radius);
    const std::size_t n = L.nodes.size();
    // u = u_0 + S g with g the edge differences; the chain is ordered left to right
    const std::size_t m = n - 1;
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t k = 0; k < i; ++k) s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = 1.0;
    Eigen::VectorXd w(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) w(static_cast<Eigen::Index>(i)) = L.psi[i] * L.cell;
    Eigen::MatrixXd center = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) -
                             Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)) * w.transpose();
    const Eigen::MatrixXd cs = center * s;
    const Eigen::MatrixXd num = cs.transpose() * w.asDiagonal() * cs;
    Eigen::VectorXd den(static_cast<Eigen::Index>(m));
    for (std::size_t e = 0; e < m; ++e)
        den(static_cast<Eigen::Index>(e)) = r * r * L.edge_psi[e] * L.cell / (L.h * L.h);
    const Eigen::VectorXd inv_sqrt = den.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd sym = inv_sqrt.asDiagonal() * num * inv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().maxCoeff();
}

}  // namespace jdlab
