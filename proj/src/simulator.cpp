#include "jdlab/simulator.hpp"

#include "jdlab/parallel.hpp"
#include "jdlab/quadrature.hpp"
#include "jdlab/stats.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace jdlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Symmetric square root of a positive semidefinite matrix (d <= 3).
Mat psd_sqrt(const Mat& m) {
    const int d = static_cast<int>(m.rows());
    if (d == 1) {
        if (!(m(0, 0) >= 0.0)) throw ModelError("diffusion matrix A + C_eps is not positive semidefinite");
        return Mat::Constant(1, 1, std::sqrt(m(0, 0)));
    }
    if (d == 2) {
        const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
        const double tr = m(0, 0) + m(1, 1);
        if (det < -1e-14 * tr * tr || tr < 0.0)
            throw ModelError("diffusion matrix A + C_eps is not positive semidefinite");
        const double s = std::sqrt(std::max(det, 0.0));
        const double t = std::sqrt(tr + 2.0 * s);
        if (t == 0.0) return Mat::Zero(2, 2);
        Mat r = m;
        r(0, 0) += s;
        r(1, 1) += s;
        return r / t;
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(m);
    if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff()))
        throw ModelError("diffusion matrix A + C_eps is not positive semidefinite");
    const Vec root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double default_r_max(const JumpKernel& j, double horizon, double level) {
    if (j.is_zero()) return std::numeric_limits<double>::infinity();
    const double target = j.tail_product_window().second * horizon / level;
    double r = j.scale().inverse(std::max(target, 1e-300));
    if (std::isfinite(j.cutoff())) r = std::min(r, j.cutoff());
    return r;
}

Vec uniform_direction(int d, Engine& rng) {
    Vec u(d);
    if (d == 1) {
        u(0) = uniform_open(rng) < 0.5 ? -1.0 : 1.0;
        return u;
    }
    if (d == 2) {
        const double a = 2.0 * std::numbers::pi * uniform_open(rng);
        u << std::cos(a), std::sin(a);
        return u;
    }
    for (;;) {
        for (int k = 0; k < d; ++k) u(k) = standard_normal(rng);
        const double n = u.norm();
        if (n > 1e-12) return u / n;
    }
}

// ------------------------------------------------------------------ radial sampler

RadialSampler::RadialSampler(const ScaleFunction& phi, double eps, double r_table, int per_decade) : eps_(eps) {
    if (!(eps > 0.0) || !(r_table > eps)) throw ConfigError("radial sampler needs 0 < eps < r_table");
    const double decades = std::log10(r_table / eps);
    const int segs = std::max(1, static_cast<int>(std::ceil(decades * per_decade)));
    const double step = std::log(r_table / eps) / segs;
    for (int k = 0; k <= segs; ++k) {
        const double lr = std::log(eps) + step * k;
        log_r_.push_back(lr);
        log_phi_.push_back(std::log(phi(std::exp(lr))));
    }
    cum_.push_back(0.0);
    double worst = 0.0;
    for (int k = 0; k < segs; ++k) {
        const double g = (log_phi_[k + 1] - log_phi_[k]) / step;
        gamma_.push_back(g);
        const double seg = std::abs(g * step) < 1e-12 ? step : (1.0 - std::exp(-g * step)) / g;
        cum_.push_back(cum_.back() + std::exp(-log_phi_[k]) * seg);
        const double mid = log_r_[k] + 0.5 * step;
        const double hat = log_phi_[k] + g * 0.5 * step;
        worst = std::max(worst, std::exp(hat - std::log(phi(std::exp(mid)))) - 1.0);
    }
    // beyond the table: phi^(rho) = phi(r_T) (rho / r_T)^{beta1} / c
    const double b1 = phi.beta1();
    const double c = phi.comp_const();
    gamma_.push_back(b1);
    log_phi_.push_back(log_phi_.back() - std::log(c));
    total_ = cum_.back() + std::exp(-log_phi_.back()) / b1;
    slack_ = worst > 0.0 ? 2.0 * worst + 1e-12 : 0.0;
}

double RadialSampler::inv_phi_hat(double rho) const {
    const double lr = std::log(rho);
    const std::size_t segs = log_r_.size() - 1;
    if (lr >= log_r_.back()) return std::exp(-(log_phi_.back() + gamma_.back() * (lr - log_r_.back())));
    std::size_t k = static_cast<std::size_t>(std::upper_bound(log_r_.begin(), log_r_.end(), lr) - log_r_.begin());
    k = k == 0 ? 0 : std::min(k - 1, segs - 1);
    return std::exp(-(log_phi_[k] + gamma_[k] * (lr - log_r_[k])));
}

double RadialSampler::sample(Engine& rng) const {
    const double u = uniform_open(rng) * total_;
    const std::size_t segs = log_r_.size() - 1;
    if (u >= cum_.back()) {
        const double rem = u - cum_.back();
        const double phi_t = std::exp(log_phi_.back());
        const double b1 = gamma_.back();
        const double inner = std::max(1.0 - rem * phi_t * b1, 1e-300);
        return std::exp(log_r_.back()) * std::pow(inner, -1.0 / b1);
    }
    std::size_t k = static_cast<std::size_t>(std::upper_bound(cum_.begin(), cum_.end(), u) - cum_.begin());
    k = std::min(k == 0 ? 0 : k - 1, segs - 1);
    const double rem = (u - cum_[k]) * std::exp(log_phi_[k]);
    const double g = gamma_[k];
    const double y = std::abs(g) < 1e-12 ? rem : -std::log(std::max(1.0 - g * rem, 1e-300)) / g;
    return std::exp(log_r_[k] + y);
}

double RadialSampler::cdf(double rho) const {
    if (rho <= eps_) return 0.0;
    const double lr = std::log(rho);
    const std::size_t segs = log_r_.size() - 1;
    if (lr >= log_r_.back()) {
        const double b1 = gamma_.back();
        const double part = std::exp(-log_phi_.back()) * (1.0 - std::exp(-b1 * (lr - log_r_.back()))) / b1;
        return (cum_.back() + part) / total_;
    }
    std::size_t k = static_cast<std::size_t>(std::upper_bound(log_r_.begin(), log_r_.end(), lr) - log_r_.begin());
    k = std::min(k == 0 ? 0 : k - 1, segs - 1);
    const double y = lr - log_r_[k];
    const double g = gamma_[k];
    const double part = std::exp(-log_phi_[k]) * (std::abs(g) < 1e-12 ? y : (1.0 - std::exp(-g * y)) / g);
    return (cum_[k] + part) / total_;
}

double majorant_rate(const JumpKernel& j, double eps) {
    if (j.is_zero()) return 0.0;
    const RadialSampler s(j.scale(), eps, std::max(eps * 1e8, 1e4));
    return j.kappa_up() * (1.0 + s.slack()) * quad::sphere_area(j.dim()) * s.mass();
}

// ------------------------------------------------------------------ small-jump moments

MomentField::MomentField(const JumpKernel& j, double eps, const Vec& center, double half_width, double spacing,
                         int threads)
    : d_(j.dim()) {
    m0_ = Vec::Zero(d_);
    c0_ = Mat::Zero(d_, d_);
    if (j.is_zero()) return;
    if (j.translation_invariant()) {
        const auto mom = small_jump_moments(j, Vec::Zero(d_), eps);
        m0_ = mom.mean;
        c0_ = mom.second;
        return;
    }
    if (d_ > 2) throw ConfigError("position-dependent small-jump moments are tabulated for d <= 2 only");
    constant_ = false;
    spacing_ = spacing;
    n_ = 2 * static_cast<int>(std::ceil(half_width / spacing)) + 1;
    lo_ = center - Vec::Constant(d_, spacing * (n_ - 1) / 2);
    const std::size_t total = d_ == 1 ? n_ : static_cast<std::size_t>(n_) * n_;
    means_.resize(total);
    seconds_.resize(total);
    const RadialRule light{4, 8, 16};
    parallel_for(total, threads, [&](std::size_t i) {
        Vec x = lo_;
        x(0) += spacing_ * static_cast<double>(i % n_);
        if (d_ == 2) x(1) += spacing_ * static_cast<double>(i / n_);
        const auto mom = small_jump_moments(j, x, eps, light);
        means_[i] = mom.mean;
        seconds_[i] = mom.second;
    });
}

void MomentField::at(const Vec& x, Vec& mean, Mat& second) const {
    if (constant_) {
        mean = m0_;
        second = c0_;
        return;
    }
    const auto coord = [&](int k, int& i, double& w) {
        const double u = std::clamp((x(k) - lo_(k)) / spacing_, 0.0, static_cast<double>(n_ - 1));
        i = std::min(static_cast<int>(u), n_ - 2);
        w = u - i;
    };
    int i0 = 0, i1 = 0;
    double w0 = 0.0, w1 = 0.0;
    coord(0, i0, w0);
    if (d_ == 1) {
        mean = (1 - w0) * means_[i0] + w0 * means_[i0 + 1];
        second = (1 - w0) * seconds_[i0] + w0 * seconds_[i0 + 1];
        return;
    }
    coord(1, i1, w1);
    const auto idx = [&](int a, int b) { return static_cast<std::size_t>(a) + static_cast<std::size_t>(b) * n_; };
    mean = (1 - w0) * (1 - w1) * means_[idx(i0, i1)] + w0 * (1 - w1) * means_[idx(i0 + 1, i1)] +
           (1 - w0) * w1 * means_[idx(i0, i1 + 1)] + w0 * w1 * means_[idx(i0 + 1, i1 + 1)];
    second = (1 - w0) * (1 - w1) * seconds_[idx(i0, i1)] + w0 * (1 - w1) * seconds_[idx(i0 + 1, i1)] +
             (1 - w0) * w1 * seconds_[idx(i0, i1 + 1)] + w0 * w1 * seconds_[idx(i0 + 1, i1 + 1)];
}

// ------------------------------------------------------------------ big jumps

namespace {

struct Proposal {
    Vec z;
    double rho = 0.0;
    double accept = 0.0;  // J / proposal majorant, in [0, 1]
};

Proposal propose(const JumpKernel& j, const Vec& x, const RadialSampler& sampler, Engine& rng) {
    Proposal p;
    p.rho = sampler.sample(rng);
    p.z = p.rho * uniform_direction(j.dim(), rng);
    const Vec y = x + p.z;
    const double jv = j(x, y);
    // far from the origin x + z - x differs from z in the last bits; J sees the rounded one
    const double seen = (y - x).norm();
    const double shape = std::pow(p.rho, j.dim());
    const double true_ratio = jv * std::pow(seen, j.dim()) * j.scale()(seen) / j.kappa_up();
    if (true_ratio > 1.0 + 1e-9) {
        std::ostringstream ss;
        ss << "jump kernel exceeds its declared majorant by the factor " << true_ratio << " at x = "
           << x.transpose() << ", |z| = " << p.rho << "; the comparability constants are wrong";
        throw ModelError(ss.str());
    }
    p.accept = jv * shape / (j.kappa_up() * (1.0 + sampler.slack()) * sampler.inv_phi_hat(p.rho));
    return p;
}

}  // namespace

Vec sample_big_jump(const JumpKernel& j, const Vec& x, double eps, double cap, Engine& rng,
                    const RadialSampler* sampler, std::size_t max_tries) {
    if (j.is_zero()) throw ModelError("sample_big_jump: kernel is zero");
    if (!(eps > 0.0) || !(eps < cap)) throw DomainError("sample_big_jump: need 0 < eps < cap");
    std::optional<RadialSampler> local;
    if (!sampler) {
        local.emplace(j.scale(), eps, std::isfinite(cap) ? cap : std::max(eps * 1e8, 1e4));
        sampler = &*local;
    }
    for (std::size_t tries = 0; tries < max_tries; ++tries) {
        const Proposal p = propose(j, x, *sampler, rng);
        if (p.rho > cap) continue;
        if (uniform_open(rng) < p.accept) return p.z;
    }
    throw NumericError("sample_big_jump: no acceptance after " + std::to_string(max_tries) + " proposals");
}

// ------------------------------------------------------------------ paths

double PathEnsemble::truncated_fraction() const {
    if (paths.empty()) return 0.0;
    std::size_t k = 0;
    for (const auto& p : paths) k += p.truncated ? 1 : 0;
    return static_cast<double>(k) / paths.size();
}

double PathEnsemble::killed_fraction() const {
    if (paths.empty()) return 0.0;
    std::size_t k = 0;
    for (const auto& p : paths) k += p.killed ? 1 : 0;
    return static_cast<double>(k) / paths.size();
}

double PathEnsemble::alive_fraction() const {
    if (paths.empty()) return 0.0;
    std::size_t k = 0;
    for (const auto& p : paths) k += (p.killed || p.truncated || p.budget_exceeded) ? 0 : 1;
    return static_cast<double>(k) / paths.size();
}

std::vector<Vec> PathEnsemble::positions_at(std::size_t k, bool alive_only) const {
    std::vector<Vec> out;
    out.reserve(paths.size());
    for (const auto& p : paths) {
        if (alive_only && (p.killed || p.truncated || p.budget_exceeded)) continue;
        out.push_back(p.positions[k]);
    }
    return out;
}

std::uint64_t PathEnsemble::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto mix = [&](double v) { h = stats::fnv1a(&v, sizeof v, h); };
    for (const auto& p : paths) {
        for (const auto& x : p.positions)
            for (int k = 0; k < x.size(); ++k) mix(x(k));
        for (double t : p.exit_time) mix(t);
        for (const auto& x : p.exit_position)
            for (int k = 0; k < x.size(); ++k) mix(x(k));
        for (const auto& e : p.events) {
            mix(e.time);
            for (int k = 0; k < e.to.size(); ++k) mix(e.to(k));
        }
        mix(static_cast<double>(p.jumps));
        mix(p.killed ? p.killed_time : -1.0);
        mix(p.truncated ? p.truncated_time : -1.0);
        mix(p.budget_exceeded ? 1.0 : 0.0);
    }
    return h;
}

std::string PathEnsemble::to_csv() const {
    std::ostringstream ss;
    const int d = static_cast<int>(x0.size());
    ss << "path";
    for (int k = 0; k < d; ++k) ss << ",x" << k;
    for (std::size_t r = 0; r < radii.size(); ++r) ss << ",exit_time_r" << r;
    ss << ",jumps,killed,truncated,budget_exceeded\n";
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& p = paths[i];
        ss << i;
        const Vec& last = p.positions.empty() ? x0 : p.positions.back();
        for (int k = 0; k < d; ++k) ss << ',' << format_double(last(k));
        for (double t : p.exit_time) ss << ',' << (std::isnan(t) ? std::string("nan") : format_double(t));
        ss << ',' << p.jumps << ',' << (p.killed ? 1 : 0) << ',' << (p.truncated ? 1 : 0) << ','
           << (p.budget_exceeded ? 1 : 0) << '\n';
    }
    return ss.str();
}

PathEnsemble simulate_paths(const Model& model, const Vec& x0, double horizon, const std::vector<double>& times,
                            const SimConfig& config, std::size_t n, const MonitorOptions& monitor) {
    const int d = model.d;
    if (x0.size() != d) throw ConfigError("simulate_paths: x0 has the wrong dimension");
    if (!(config.dt > 0.0)) throw ConfigError("simulate_paths: dt must be positive");
    if (!(horizon > 0.0)) throw ConfigError("simulate_paths: horizon must be positive");
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < 0.0 || times[k] > horizon * (1.0 + 1e-12))
            throw ConfigError("simulate_paths: requested times must lie in [0, horizon]");
        if (k > 0 && times[k] < times[k - 1]) throw ConfigError("simulate_paths: requested times must be sorted");
    }
    const JumpKernel& kern = model.kernel;
    const bool jumps = !kern.is_zero();

    PathEnsemble ens;
    ens.x0 = x0;
    ens.horizon = horizon;
    ens.times = times;
    ens.monitor_center = monitor.center.size() == d ? monitor.center : x0;
    ens.radii = monitor.radii;
    ens.config = config;
    ens.r_max = jumps ? (config.r_max > 0.0 ? config.r_max : default_r_max(kern, horizon))
                      : std::numeric_limits<double>::infinity();
    if (jumps && !(config.eps > 0.0 && config.eps < ens.r_max))
        throw ConfigError("simulate_paths: need 0 < eps < r_max");

    RadialSampler sampler;
    if (jumps) {
        sampler = RadialSampler(kern.scale(), config.eps, ens.r_max);
        ens.proposal_rate = kern.kappa_up() * (1.0 + sampler.slack()) * quad::sphere_area(d) * sampler.mass();
        if (config.dt * ens.proposal_rate > config.rate_budget * (1.0 + 1e-6)) {
            std::ostringstream ss;
            ss << "dt * sup Lambda_eps = " << config.dt * ens.proposal_rate << " exceeds the budget "
               << config.rate_budget << "; use dt <= " << config.rate_budget / ens.proposal_rate
               << " or a larger eps";
            throw ConfigError(ss.str());
        }
    }
    const MomentField moments = jumps ? MomentField(kern, config.eps, x0, 6.0, 0.25, config.threads) : MomentField();
    const bool constant_coeffs = model.diffusion.constant() && (!jumps || kern.translation_invariant());
    Vec drift0 = Vec::Zero(d);
    Mat sqrt0 = Mat::Identity(d, d);
    if (constant_coeffs) {
        Vec m = Vec::Zero(d);
        Mat c = Mat::Zero(d, d);
        if (jumps) moments.at(x0, m, c);
        drift0 = m;
        sqrt0 = psd_sqrt(model.diffusion(x0) + c);
    }

    // shared step schedule: multiples of dt merged with the requested times
    std::vector<double> grid;
    {
        const std::size_t steps = static_cast<std::size_t>(std::ceil(horizon / config.dt - 1e-9));
        for (std::size_t k = 1; k <= steps; ++k) grid.push_back(std::min(horizon, config.dt * static_cast<double>(k)));
        for (double t : times)
            if (t > 0.0) grid.push_back(t);
        std::sort(grid.begin(), grid.end());
        std::vector<double> merged;
        for (double t : grid)
            if (merged.empty() || t - merged.back() > 1e-12 * std::max(1.0, t)) merged.push_back(t);
            else merged.back() = std::max(merged.back(), t);
        grid.swap(merged);
    }
    const double last_time = times.empty() ? 0.0 : times.back();
    const std::size_t nr = monitor.radii.size();

    ens.paths.resize(n);
    parallel_for(n, config.threads, [&](std::size_t path) {
        Engine rng = substream(config.seed, path, config.stream);
        PathRecord& rec = ens.paths[path];
        rec.positions.assign(times.size(), x0);
        rec.exit_time.assign(nr, kNaN);
        rec.exit_position.assign(nr, Vec::Zero(d));
        Vec x = x0;
        std::size_t next_time = 0;
        while (next_time < times.size() && times[next_time] <= 0.0) rec.positions[next_time++] = x;
        std::size_t exited = 0;
        bool stopped = false;
        const Vec& mc = ens.monitor_center;

        const auto check_exits = [&](double t, const Vec& y) {
            for (std::size_t r = 0; r < nr; ++r) {
                if (!std::isnan(rec.exit_time[r])) continue;
                if ((y - mc).norm() >= monitor.radii[r]) {
                    rec.exit_time[r] = t;
                    rec.exit_position[r] = y;
                    ++exited;
                }
            }
            if (config.kill && (y - config.kill->center).norm() >= config.kill->radius) {
                rec.killed = true;
                rec.killed_time = t;
                stopped = true;
            }
        };

        Vec drift(d), mean(d);
        Mat cov(d, d), root(d, d), second(d, d);
        Vec xi(d);
        double t = 0.0;
        for (std::size_t step = 0; step < grid.size() && !stopped; ++step) {
            const double t1 = grid[step];
            const double h = t1 - t;
            if (constant_coeffs) {
                drift = drift0;
                root = sqrt0;
            } else {
                drift = divergence_drift(model.diffusion, x);
                cov = model.diffusion(x);
                if (jumps) {
                    moments.at(x, mean, second);
                    drift += mean;
                    cov += second;
                }
                root = psd_sqrt(cov);
            }
            for (int k = 0; k < d; ++k) xi(k) = standard_normal(rng);
            Vec y = x + drift * h + root * xi * std::sqrt(h);

            if (config.bridge) {
                for (std::size_t r = 0; r < nr; ++r) {
                    if (!std::isnan(rec.exit_time[r])) continue;
                    const double rr = monitor.radii[r];
                    const double a = rr - (x - mc).norm();
                    const double b = rr - (y - mc).norm();
                    if (a <= 0.0 || b <= 0.0) continue;
                    Vec u = x - mc;
                    const double un = u.norm();
                    u = un > 1e-300 ? Vec(u / un) : Vec(Vec::Unit(d, 0));
                    const double var = (u.transpose() * root * root.transpose() * u)(0, 0);
                    const double p = std::exp(-2.0 * a * b / (var * h));
                    if (uniform_open(rng) < p) {
                        Vec dir = y - mc;
                        const double dn = dir.norm();
                        rec.exit_time[r] = t + 0.5 * h;
                        rec.exit_position[r] = mc + rr * (dn > 1e-300 ? Vec(dir / dn) : u);
                        ++exited;
                    }
                }
            }
            x = y;
            check_exits(t1, x);

            if (jumps && !stopped) {
                const int count = poisson_small(rng, ens.proposal_rate * h);
                if (count > 0) {
                    std::vector<double> when(static_cast<std::size_t>(count));
                    for (double& w : when) w = t + h * uniform_open(rng);
                    std::sort(when.begin(), when.end());
                    for (double tj : when) {
                        const Proposal p = propose(kern, x, sampler, rng);
                        if (!(uniform_open(rng) < p.accept)) continue;
                        if (p.rho > ens.r_max) {
                            rec.truncated = true;
                            rec.truncated_time = tj;
                            stopped = true;
                            break;
                        }
                        if (config.log_events) rec.events.push_back({tj, x, x + p.z});
                        x += p.z;
                        ++rec.jumps;
                        check_exits(tj, x);
                        if (rec.jumps >= config.max_events) {
                            rec.budget_exceeded = true;
                            stopped = true;
                        }
                        if (stopped) break;
                    }
                }
            }
            if (!x.allFinite()) throw NumericError("simulate_paths: non-finite position");
            t = t1;
            while (next_time < times.size() && times[next_time] <= t1 + 1e-12 * std::max(1.0, t1))
                rec.positions[next_time++] = x;
            if (monitor.stop_after_exit && nr > 0 && exited == nr && t1 >= last_time) break;
        }
        for (; next_time < times.size(); ++next_time) rec.positions[next_time] = x;
    });
    return ens;
}

// ------------------------------------------------------------------ estimators on paths

std::vector<ExitRadius> exit_statistics(const Model& model, const Vec& x0, const std::vector<double>& radii,
                                        const SimConfig& config, std::size_t n, double confine_a,
                                        double horizon_factor, double dt_per_r2) {
    std::vector<ExitRadius> out;
    for (std::size_t ri = 0; ri < radii.size(); ++ri) {
        const double r = radii[ri];
        if (!(r > 0.0)) throw DomainError("exit_statistics: radii must be positive");
        SimConfig cfg = config;
        cfg.stream = config.stream * 1000 + ri;
        if (dt_per_r2 > 0.0) cfg.dt = dt_per_r2 * r * r;
        double scale = r * r;
        if (!model.kernel.is_zero()) scale = std::max(scale, model.kernel.scale()(r));
        const double horizon = horizon_factor * scale;
        MonitorOptions mon;
        mon.radii = {r};
        mon.center = x0;
        mon.stop_after_exit = true;
        const PathEnsemble ens = simulate_paths(model, x0, horizon, {}, cfg, n, mon);
        ExitRadius er;
        er.radius = r;
        er.n = n;
        er.histogram.assign(9, 0.0);
        std::vector<double> taus;
        std::size_t confined = 0, unusable = 0;
        for (const auto& p : ens.paths) {
            const double tau = p.exit_time[0];
            if (p.truncated || p.budget_exceeded) ++unusable;
            if (std::isnan(tau)) {
                taus.push_back(horizon);
                ++unusable;
                ++confined;
                continue;
            }
            ++er.exited;
            taus.push_back(tau);
            if (tau > confine_a * r * r) ++confined;
            const double rel = (p.exit_position[0] - x0).norm() / r;
            const int bin = std::min(8, static_cast<int>((rel - 1.0) / 0.25));
            er.histogram[static_cast<std::size_t>(std::max(bin, 0))] += 1.0 / n;
        }
        const auto ci = stats::mean_ci(taus);
        er.mean = ci.mean;
        er.se = ci.se;
        er.lo = ci.lo;
        er.hi = ci.hi;
        er.confined_fraction = static_cast<double>(confined) / n;
        er.usable = unusable <= n / 100;
        out.push_back(std::move(er));
    }
    return out;
}

std::vector<HittingTail> hitting_tail(const Model& model, const Vec& x, double r, const std::vector<double>& s_list,
                                      const SimConfig& config, std::size_t n, double horizon_factor) {
    for (double s : s_list)
        if (s < 2.0 * r) throw DomainError("hitting_tail: s must be at least 2r");
    double scale = r * r;
    if (!model.kernel.is_zero()) scale = std::max(scale, model.kernel.scale()(r));
    MonitorOptions mon;
    mon.radii = {r};
    mon.center = x;
    mon.stop_after_exit = true;
    const PathEnsemble ens = simulate_paths(model, x, horizon_factor * scale, {}, config, n, mon);
    std::vector<HittingTail> out;
    for (double s : s_list) {
        HittingTail h;
        h.s = s;
        for (const auto& p : ens.paths) {
            if (std::isnan(p.exit_time[0])) continue;
            ++h.exits;
            if ((p.exit_position[0] - x).norm() >= s) ++h.hits;
        }
        const auto pr = stats::proportion_ci(h.hits, std::max<std::size_t>(h.exits, 1));
        h.p = pr.p;
        h.se = pr.se;
        h.lo = pr.lo;
        h.hi = pr.hi;
        const double m = std::min(s, 1.0);
        h.bound_shape = r * r / (m * m);
        out.push_back(h);
    }
    return out;
}

LevySystemReport levy_system_check(const Model& model, const Vec& x, const Ball& ball,
                                   const std::function<double(const Vec&, const Vec&)>& f, const SimConfig& config,
                                   std::size_t n, double horizon) {
    const JumpKernel& kern = model.kernel;
    const int d = model.d;
    LevySystemReport rep;
    if (kern.is_zero()) return rep;
    SimConfig cfg = config;
    cfg.log_events = true;
    cfg.kill = ball;
    // dense step record: positions at every dt
    std::vector<double> times;
    const std::size_t steps = static_cast<std::size_t>(std::ceil(horizon / cfg.dt - 1e-9));
    for (std::size_t k = 0; k <= steps; ++k) times.push_back(std::min(horizon, cfg.dt * static_cast<double>(k)));
    const PathEnsemble ens = simulate_paths(model, x, horizon, times, cfg, n);

    // inner integral int_{|z| > eps} f(y, y + z) J(y, y + z) dz on fixed nodes
    const double r_max = ens.r_max;
    const auto dirs = quad::direction_rule(d, 16);
    const quad::Rule& gl = quad::gauss_legendre(8);
    std::vector<double> rho, wrho;
    {
        const double la = std::log(cfg.eps), lb = std::log(r_max);
        const int panels = std::max(4, static_cast<int>(std::ceil((lb - la) / std::log(10.0) * 4)));
        const double w = (lb - la) / panels;
        for (int p = 0; p < panels; ++p)
            for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
                const double u = la + w * (p + 0.5 * (gl.nodes[q] + 1.0));
                const double rr = std::exp(u);
                rho.push_back(rr);
                wrho.push_back(0.5 * w * gl.weights[q] * rr * std::pow(rr, d - 1));
            }
    }
    const auto inner = [&](const Vec& y) {
        double s = 0.0;
        for (std::size_t a = 0; a < dirs.directions.size(); ++a)
            for (std::size_t b = 0; b < rho.size(); ++b) {
                const Vec z = y + rho[b] * dirs.directions[a];
                const double fv = f(y, z);
                if (fv != 0.0) s += dirs.weights[a] * wrho[b] * fv * kern(y, z);
            }
        return s;
    };
    std::vector<double> lhs(n, 0.0), rhs(n, 0.0);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
        const auto& p = ens.paths[i];
        const double tau = p.killed ? p.killed_time : horizon;
        for (const auto& e : p.events)
            if (e.time <= tau) lhs[i] += f(e.from, e.to);
        for (std::size_t k = 0; k + 1 < times.size(); ++k) {
            if (times[k] >= tau) break;
            const double h = std::min(times[k + 1], tau) - times[k];
            rhs[i] += h * inner(p.positions[k]);
        }
    });
    const auto l = stats::mean_ci(lhs);
    const auto r = stats::mean_ci(rhs);
    rep.lhs = l.mean;
    rep.rhs = r.mean;
    rep.lhs_se = l.se;
    rep.rhs_se = r.se;
    const double m = std::max(rep.lhs, rep.rhs);
    rep.discrepancy = m > 0.0 ? std::abs(rep.lhs - rep.rhs) / m : 0.0;
    // the two estimators share paths; the difference per path has its own variance
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = lhs[i] - rhs[i];
    const auto dd = stats::mean_ci(diff);
    rep.z = dd.se > 0.0 ? std::abs(dd.mean) / dd.se : (dd.mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    return rep;
}

}  // namespace jdlab
