#include "jdlab/estimators.hpp"

#include "jdlab/parallel.hpp"
#include "jdlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace jdlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec scalar(double a) {
    Vec v(1);
    v << a;
    return v;
}

void require_1d(const Model& m, const char* where) {
    if (m.d != 1) throw ConfigError(std::string(where) + ": only d = 1 is supported");
}

LatticeGenerator line_lattice(const Model& model, double lo, double hi, double h, int threads) {
    LatticeOptions opt;
    opt.h = h;
    opt.box_lo = scalar(lo);
    opt.box_hi = scalar(hi);
    opt.threads = threads;
    return LatticeGenerator::build(model, opt);
}

double gaussian_shape(double t, double R, int d, double rate) {
    return std::pow(t, -0.5 * d) * std::exp(-rate * R * R / t);
}

void set_sample(Record& rec, const std::string& prefix, const DensitySample& s) {
    rec.set(prefix + ".t", s.t);
    rec.set(prefix + ".x", s.x);
    rec.set(prefix + ".R", s.R);
    rec.set(prefix + ".value", s.value);
}

}  // namespace

// ------------------------------------------------------------------ sandwich

std::vector<DensitySample> density_samples(const LatticeGenerator& g, const std::vector<HeatVector>& heats,
                                           double floor) {
    std::vector<DensitySample> out;
    for (const auto& hv : heats) {
        const Vec& base = g.coord(hv.base);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!(hv.values[i] >= floor)) continue;
            out.push_back({hv.t, base(0), (g.coord(i) - base).norm(), hv.values[i]});
        }
    }
    return out;
}

std::vector<double> default_rate_grid() {
    std::vector<double> r;
    for (int k = -16; k < 16; ++k) r.push_back(0.5 * std::pow(2.0, k / 4.0));
    return r;
}

SandwichFit fit_sandwich(const std::vector<DensitySample>& data, const ScaleFunction* phi, int d, double budget,
                         const std::vector<double>& rates) {
    SandwichFit fit;
    fit.budget = budget;
    fit.points = data.size();
    fit.rates = rates;
    {
        std::ostringstream ss;
        ss << data.size() << " points, " << rates.size() << " Gaussian rates in [" << rates.front() << ", "
           << rates.back() << "], shape " << (phi ? "on-diagonal ^ (gaussian + jump)" : "gaussian");
        fit.grid = ss.str();
    }
    if (data.empty()) {
        fit.reason = "no admitted data points";
        return fit;
    }
    for (const auto& s : data)
        if (!(s.value > 0.0) || !(s.t > 0.0)) throw DomainError("fit_sandwich: samples need t > 0 and value > 0");
    const auto shape = [&](const DensitySample& s, double rate) {
        return phi ? envelope_shape(s.t, s.R, *phi, d, rate) : gaussian_shape(s.t, s.R, d, rate);
    };
    const std::size_t m = rates.size();
    fit.c3_by_rate.assign(m, 0.0);
    fit.c1_by_rate.assign(m, kInf);
    std::vector<std::size_t> arg3(m, 0), arg1(m, 0);
    parallel_for(m, 4, [&](std::size_t k) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double sh = shape(data[i], rates[k]);
            const double q = sh > 0.0 ? data[i].value / sh : kInf;
            if (q > fit.c3_by_rate[k]) {
                fit.c3_by_rate[k] = q;
                arg3[k] = i;
            }
            if (q < fit.c1_by_rate[k]) {
                fit.c1_by_rate[k] = q;
                arg1[k] = i;
            }
        }
    });
    double best = kInf;
    std::size_t best_lo = 0, best_hi = 0;
    for (std::size_t a = 0; a < m; ++a) {          // lower side: rate c2
        for (std::size_t b = 0; b < m; ++b) {      // upper side: rate c4
            if (rates[a] < rates[b]) continue;
            const double c1 = fit.c1_by_rate[a], c3 = fit.c3_by_rate[b];
            if (!(c1 > 0.0) || !std::isfinite(c3) || c1 > c3) continue;
            // ties go to the pair with the closest rates
            const double q = c3 / c1;
            const bool tie = std::isfinite(best) && std::abs(q - best) <= 1e-12 * best;
            if ((q < best && !tie) || (tie && rates[a] - rates[b] < rates[best_lo] - rates[best_hi])) {
                best = std::min(best, q);
                best_lo = a;
                best_hi = b;
            }
        }
    }
    if (!std::isfinite(best)) {
        fit.reason = "no Gaussian-rate pair gives finite positive constants";
        return fit;
    }
    fit.feasible = true;
    fit.ratio = best;
    fit.constants.c1 = fit.c1_by_rate[best_lo];
    fit.constants.c2 = rates[best_lo];
    fit.constants.c3 = fit.c3_by_rate[best_hi];
    fit.constants.c4 = rates[best_hi];
    fit.constants.fitted = true;
    fit.lower_witness = data[arg1[best_lo]];
    fit.upper_witness = data[arg3[best_hi]];
    fit.slack_low.resize(data.size());
    fit.slack_high.resize(data.size());
    std::size_t violations = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        fit.slack_low[i] = std::log(data[i].value / (fit.constants.c1 * shape(data[i], fit.constants.c2)));
        fit.slack_high[i] = std::log(fit.constants.c3 * shape(data[i], fit.constants.c4) / data[i].value);
        if (fit.slack_low[i] < -1e-12 || fit.slack_high[i] < -1e-12) ++violations;
    }
    if (violations) {
        fit.feasible = false;
        fit.reason = std::to_string(violations) + " points outside the fitted envelope";
        return fit;
    }
    fit.pass = fit.ratio <= budget;
    if (!fit.pass) fit.reason = "c3 / c1 exceeds the budget";
    return fit;
}

Record SandwichFit::to_record() const {
    Record rec;
    rec.set("check", "sandwich");
    rec.set("verdict", pass ? "PASS" : "FAIL");
    rec.set("feasible", feasible ? "true" : "false");
    rec.set("points", static_cast<double>(points));
    rec.set("grid", grid);
    if (feasible) {
        rec.set("c1", constants.c1);
        rec.set("c2", constants.c2);
        rec.set("c3", constants.c3);
        rec.set("c4", constants.c4);
        rec.set("ratio", ratio);
        set_sample(rec, "witness.upper", upper_witness);
        set_sample(rec, "witness.lower", lower_witness);
    }
    rec.set("budget", budget);
    if (!reason.empty()) rec.set("reason", reason);
    return rec;
}

// ------------------------------------------------------------------ exit and hitting

ScalingFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& sigma) {
    if (x.size() != y.size() || x.size() != sigma.size()) throw DomainError("loglog_fit: size mismatch");
    if (x.size() < 3) throw DomainError("loglog_fit: insufficient scales (need at least 3)");
    std::vector<double> lx, ly, w;
    bool weighted = true;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("loglog_fit: values must be positive");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
        const double s = sigma[i] / y[i];
        if (!(s > 0.0)) weighted = false;
        w.push_back(s > 0.0 ? 1.0 / (s * s) : 0.0);
    }
    const auto f = weighted ? stats::wls(lx, ly, w) : stats::ols(lx, ly);
    ScalingFit out;
    out.slope = f.slope;
    out.intercept = f.intercept;
    out.slope_se = f.slope_se;
    out.lo = f.slope - 1.96 * f.slope_se;
    out.hi = f.slope + 1.96 * f.slope_se;
    out.residual = f.residual_rms;
    out.scales = x.size();
    return out;
}

ExitScalingReport exit_scaling(const Model& model, const Vec& x0, const std::vector<double>& radii,
                               const SimConfig& config, std::size_t n, double dt_per_r2) {
    if (radii.size() < 3) throw DomainError("exit_scaling: insufficient scales (need at least 3 radii)");
    const auto [lo, hi] = std::minmax_element(radii.begin(), radii.end());
    if (*hi / *lo < 4.0 - 1e-12) throw DomainError("exit_scaling: radii must span at least two octaves");
    if (*hi > 1.0) throw DomainError("exit_scaling: radii must not exceed 1");
    ExitScalingReport rep;
    rep.radii = exit_statistics(model, x0, radii, config, n, 0.1, 20.0, dt_per_r2);
    std::vector<double> r, m, s;
    rep.a1 = kInf;
    for (const auto& e : rep.radii) {
        r.push_back(e.radius);
        m.push_back(e.mean);
        s.push_back(e.se);
        rep.a1 = std::min(rep.a1, e.mean / (e.radius * e.radius));
        rep.c1 = std::max(rep.c1, e.mean / (e.radius * e.radius));
        rep.all_usable = rep.all_usable && e.usable;
    }
    rep.fit = loglog_fit(r, m, s);
    return rep;
}

Record ExitScalingReport::to_record() const {
    Record rec;
    rec.set("check", "exit-scaling");
    for (std::size_t i = 0; i < radii.size(); ++i) {
        const std::string p = "radius." + std::to_string(i);
        rec.set(p + ".r", radii[i].radius);
        rec.set(p + ".mean", radii[i].mean);
        rec.set(p + ".se", radii[i].se);
        rec.set(p + ".confined", radii[i].confined_fraction);
        rec.set(p + ".usable", radii[i].usable ? "true" : "false");
    }
    rec.set("slope", fit.slope);
    rec.set("slope.se", fit.slope_se);
    rec.set("slope.lo", fit.lo);
    rec.set("slope.hi", fit.hi);
    rec.set("residual", fit.residual);
    rec.set("a1", a1);
    rec.set("c1", c1);
    return rec;
}

HittingReport hitting_scaling(const Model& model, const Vec& x, double r, const std::vector<double>& s_list,
                              const SimConfig& config, std::size_t n) {
    if (s_list.size() < 2) throw DomainError("hitting_scaling: need at least two values of s");
    HittingReport rep;
    rep.tails = hitting_tail(model, x, r, s_list, config, n);
    for (const auto& h : rep.tails) rep.constant = std::max(rep.constant, h.hi / h.bound_shape);
    const auto& a = rep.tails[0];
    const auto& b = rep.tails[1];
    rep.scaling_ratio = b.bound_shape > 0.0 ? a.bound_shape / b.bound_shape : kInf;
    if (a.hits == 0 || b.hits == 0) {
        rep.reason = "no hits at one of the distances; increase n";
        return rep;
    }
    rep.ratio = a.p / b.p;
    // treats the two estimates as independent, which overstates the spread (hits nest)
    const double sd = std::sqrt((a.se / a.p) * (a.se / a.p) + (b.se / b.p) * (b.se / b.p));
    rep.ratio_lo = rep.ratio * std::exp(-1.96 * sd);
    rep.ratio_hi = rep.ratio * std::exp(1.96 * sd);
    const bool finite = std::isfinite(rep.constant) && rep.constant > 0.0;
    rep.pass = finite && rep.ratio_lo <= rep.scaling_ratio;
    if (!finite) rep.reason = "fitted constant is not finite";
    else if (!rep.pass) rep.reason = "tail decays faster than (s ^ 1)^{-2} beyond the interval";
    return rep;
}

Record HittingReport::to_record() const {
    Record rec;
    rec.set("check", "hitting");
    rec.set("verdict", pass ? "PASS" : "FAIL");
    for (std::size_t i = 0; i < tails.size(); ++i) {
        const std::string p = "s." + std::to_string(i);
        rec.set(p + ".s", tails[i].s);
        rec.set(p + ".p", tails[i].p);
        rec.set(p + ".lo", tails[i].lo);
        rec.set(p + ".hi", tails[i].hi);
        rec.set(p + ".hits", static_cast<double>(tails[i].hits));
        rec.set(p + ".exits", static_cast<double>(tails[i].exits));
    }
    rec.set("constant", constant);
    rec.set("ratio", ratio);
    rec.set("ratio.lo", ratio_lo);
    rec.set("ratio.hi", ratio_hi);
    rec.set("scaling_ratio", scaling_ratio);
    if (!reason.empty()) rec.set("reason", reason);
    return rec;
}

// ------------------------------------------------------------------ density agreement

AgreementReport density_agreement(const LatticeGenerator& g, const HeatVector& heat, const std::vector<double>& samples,
                                  std::size_t n_total, int nodes_per_bin, double mass_threshold, double k) {
    if (g.dim() != 1) throw ConfigError("density_agreement: d = 1 only");
    if (nodes_per_bin < 1) throw DomainError("density_agreement: nodes_per_bin must be positive");
    AgreementReport rep;
    const double h = g.h();
    const std::size_t nodes = g.size();
    const std::size_t nb = nodes / static_cast<std::size_t>(nodes_per_bin);
    const double x_lo = g.coord(0)(0) - 0.5 * h;
    const double width = nodes_per_bin * h;
    rep.edges.resize(nb + 1);
    for (std::size_t b = 0; b <= nb; ++b) rep.edges[b] = x_lo + width * static_cast<double>(b);
    rep.oracle_mass.assign(nb, 0.0);
    rep.counts.assign(nb, 0.0);
    for (std::size_t i = 0; i < nb * nodes_per_bin; ++i) rep.oracle_mass[i / nodes_per_bin] += heat.values[i] * h;
    for (double x : samples) {
        const double u = (x - x_lo) / width;
        if (u < 0.0 || u >= static_cast<double>(nb)) continue;
        rep.counts[static_cast<std::size_t>(u)] += 1.0;
    }
    const double n = static_cast<double>(n_total);
    for (std::size_t b = 0; b < nb; ++b) {
        const double p = rep.oracle_mass[b];
        if (p < mass_threshold) continue;
        ++rep.bins;
        const double z = std::abs(rep.counts[b] - n * p) / std::sqrt(n * p * (1.0 - p));
        if (z <= k) ++rep.within;
        if (z > rep.worst_z) {
            rep.worst_z = z;
            rep.worst_x = 0.5 * (rep.edges[b] + rep.edges[b + 1]);
        }
    }
    rep.fraction = rep.bins ? static_cast<double>(rep.within) / rep.bins : 0.0;
    return rep;
}

std::string AgreementReport::csv() const {
    std::ostringstream ss;
    ss << "lo,hi,oracle_mass,count\n";
    for (std::size_t b = 0; b < counts.size(); ++b)
        ss << format_double(edges[b]) << ',' << format_double(edges[b + 1]) << ',' << format_double(oracle_mass[b])
           << ',' << format_double(counts[b]) << '\n';
    return ss.str();
}

// ------------------------------------------------------------------ near-diagonal

NearDiagonalReport near_diagonal_check(const Model& model, double x0, const std::vector<double>& times,
                                       const OracleGrid& grid, double factor) {
    require_1d(model, "near_diagonal_check");
    NearDiagonalReport rep;
    rep.times = times;
    rep.factor = factor;
    for (double t : times) {
        if (!(t > 0.0)) throw DomainError("near_diagonal_check: times must be positive");
        const double r = std::sqrt(t);
        const double h = r / grid.h_per_scale;
        // the box only has to cover the ball: everything leaving it is killed anyway
        const LatticeGenerator g = line_lattice(model, x0 - r - 2 * h, x0 + r + 2 * h, h, grid.threads);
        const LatticeGenerator sub = g.restrict_to_ball(scalar(x0), r);
        std::vector<std::size_t> half;
        for (std::size_t i = 0; i < sub.size(); ++i)
            if (std::abs(sub.coord(i)(0) - x0) <= 0.5 * r + 1e-12) half.push_back(i);
        std::vector<double> mins(half.size(), kInf);
        std::vector<std::size_t> arg(half.size(), 0);
        parallel_for(half.size(), grid.threads, [&](std::size_t a) {
            const HeatVector hv = evolve(sub, half[a], t, grid.evolve);
            for (std::size_t b : half)
                if (hv.values[b] < mins[a]) {
                    mins[a] = hv.values[b];
                    arg[a] = b;
                }
        });
        std::size_t best = 0;
        for (std::size_t a = 1; a < half.size(); ++a)
            if (mins[a] < mins[best]) best = a;
        rep.minima.push_back(mins[best] * std::sqrt(t));
        rep.witness_x.push_back(sub.coord(half[best])(0));
        rep.witness_y.push_back(sub.coord(arg[best])(0));
    }
    const auto [lo, hi] = std::minmax_element(rep.minima.begin(), rep.minima.end());
    rep.spread = *lo > 0.0 ? *hi / *lo : kInf;
    rep.pass = *lo > 0.0 && rep.spread <= factor;
    return rep;
}

Record NearDiagonalReport::to_record() const {
    Record rec;
    rec.set("check", "near-diagonal");
    rec.set("verdict", pass ? "PASS" : "FAIL");
    rec.set("times", times);
    rec.set("minima", minima);
    rec.set("witness.x", witness_x);
    rec.set("witness.y", witness_y);
    rec.set("spread", spread);
    rec.set("factor", factor);
    return rec;
}

// ------------------------------------------------------------------ space-time hitting

SpaceTimeReport spacetime_hitting_check(const Model& model, double x, double r, const std::vector<SpaceTimeSet>& sets,
                                        const OracleGrid& grid, int time_points) {
    require_1d(model, "spacetime_hitting_check");
    if (!(r > 0.0) || r > 1.0) throw DomainError("spacetime_hitting_check: need 0 < r <= 1");
    const double r2 = r * r;
    for (const auto& a : sets) {
        if (a.s_lo < 0.0 || a.s_hi > r2 * (1 + 1e-12) || a.s_hi < a.s_lo || a.radius < 0.0 ||
            std::abs(a.center - x) + a.radius > r * (1 + 1e-12))
            throw DomainError("spacetime_hitting_check: set lies outside the cylinder (0, r^2] x B(x, r)");
    }
    const double h = r / grid.h_per_scale;
    const LatticeGenerator g = line_lattice(model, x - r - 2 * h, x + r + 2 * h, h, grid.threads);
    const LatticeGenerator sub = g.restrict_to_ball(scalar(x), r);
    const std::size_t x_node = sub.nearest(scalar(x));
    const quad::Rule& gl = quad::gauss_legendre(std::max(2, time_points));
    SpaceTimeReport rep;
    for (const auto& a : sets) {
        std::vector<std::size_t> nodes;
        for (std::size_t i = 0; i < sub.size(); ++i)
            if (std::abs(sub.coord(i)(0) - a.center) <= a.radius) nodes.push_back(i);
        const double m = (a.s_hi - a.s_lo) * static_cast<double>(nodes.size()) * h;
        if (!(m > 0.0)) {
            rep.occupation.push_back(0.0);
            rep.measure.push_back(0.0);
            rep.ratio.push_back(0.0);
            rep.skipped.push_back(true);
            continue;
        }
        // the slice A_{r^2 - s} is non-empty for lags s in [r^2 - s_hi, r^2 - s_lo]
        const double l0 = std::max(0.0, r2 - a.s_hi), l1 = r2 - a.s_lo;
        std::vector<double> lags;
        for (double u : gl.nodes) lags.push_back(l0 + 0.5 * (l1 - l0) * (u + 1.0));
        const auto heats = evolve_many(sub, x_node, lags, grid.evolve);
        double integral = 0.0;
        for (std::size_t k = 0; k < lags.size(); ++k) {
            double mass = 0.0;
            for (std::size_t i : nodes) mass += heats[k].values[i] * h;
            integral += 0.5 * (l1 - l0) * gl.weights[k] * mass;
        }
        const double occ = integral / r2;
        rep.occupation.push_back(occ);
        rep.measure.push_back(m);
        rep.ratio.push_back(occ * std::pow(r, 3) / m);
        rep.skipped.push_back(false);
    }
    double lo = kInf, hi = 0.0;
    for (std::size_t i = 0; i < rep.ratio.size(); ++i) {
        if (rep.skipped[i]) continue;
        lo = std::min(lo, rep.ratio[i]);
        hi = std::max(hi, rep.ratio[i]);
    }
    rep.constant = std::isfinite(lo) ? lo : 0.0;
    rep.spread = lo > 0.0 && std::isfinite(lo) ? hi / lo : kInf;
    return rep;
}

Record SpaceTimeReport::to_record() const {
    Record rec;
    rec.set("check", "spacetime-hitting");
    rec.set("occupation", occupation);
    rec.set("measure", measure);
    rec.set("ratio", ratio);
    rec.set("constant", constant);
    rec.set("spread", spread);
    return rec;
}

// ------------------------------------------------------------------ Harnack

HarnackReport harnack_ratio(const Model& model, double base, const std::vector<double>& radii, double delta,
                            const OracleGrid& grid, double factor, int time_samples, bool full_scale) {
    require_1d(model, "harnack_ratio");
    if (!(delta > 0.0) || delta > 0.25) throw DomainError("harnack_ratio: need 0 < delta <= 1/4");
    if (time_samples < 1) throw DomainError("harnack_ratio: time_samples must be positive");
    HarnackReport rep;
    rep.base = base;
    rep.delta = delta;
    for (double R : radii) {
        if (!(R > 0.0)) throw DomainError("harnack_ratio: radii must be positive");
        double w = R * R;
        if (full_scale && !model.kernel.is_zero()) w = std::min(w, model.kernel.scale()(R));
        const double h = R / grid.h_per_scale;
        const LatticeGenerator g = line_lattice(model, base - R - grid.margin, base + R + grid.margin, h, grid.threads);
        std::vector<double> times;
        for (int k = 0; k < time_samples; ++k) times.push_back(delta * w * (1.0 + (k + 0.5) / time_samples));
        for (int k = 0; k < time_samples; ++k) times.push_back(delta * w * (3.0 + (k + 0.5) / time_samples));
        const auto heats = evolve_many(g, g.nearest(scalar(base)), times, grid.evolve);
        HarnackScale sc;
        sc.R = R;
        sc.inf_plus = kInf;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (std::abs(g.coord(i)(0) - base) >= R) continue;
            for (int k = 0; k < time_samples; ++k) {
                sc.sup_minus = std::max(sc.sup_minus, heats[k].values[i]);
                sc.inf_plus = std::min(sc.inf_plus, heats[time_samples + k].values[i]);
            }
        }
        sc.resolved = sc.inf_plus >= kMassFloor;
        sc.ratio = sc.resolved ? sc.sup_minus / sc.inf_plus : kInf;
        rep.scales.push_back(sc);
    }
    double lo = kInf, hi = 0.0;
    bool resolved = true;
    for (const auto& s : rep.scales) {
        resolved = resolved && s.resolved;
        lo = std::min(lo, s.ratio);
        hi = std::max(hi, s.ratio);
    }
    rep.spread = resolved && lo > 0.0 ? hi / lo : kInf;
    rep.pass = resolved && rep.spread <= factor;
    return rep;
}

Record HarnackReport::to_record() const {
    Record rec;
    rec.set("check", "harnack");
    rec.set("verdict", pass ? "PASS" : "FAIL");
    rec.set("base", base);
    rec.set("delta", delta);
    std::vector<double> r, ratio, sup, inf;
    for (const auto& s : scales) {
        r.push_back(s.R);
        ratio.push_back(s.ratio);
        sup.push_back(s.sup_minus);
        inf.push_back(s.inf_plus);
    }
    rec.set("R", r);
    rec.set("ratio", ratio);
    rec.set("sup_minus", sup);
    rec.set("inf_plus", inf);
    rec.set("spread", spread);
    return rec;
}

// ------------------------------------------------------------------ Hoelder

HolderReport holder_modulus(const Model& model, double x0, double R, const OracleGrid& grid, int bins) {
    require_1d(model, "holder_modulus");
    if (!(R > 0.0)) throw DomainError("holder_modulus: R must be positive");
    HolderReport rep;
    rep.R = R;
    const double h = R / grid.h_per_scale;
    const LatticeGenerator g = line_lattice(model, x0 - R - grid.margin, x0 + R + grid.margin, h, grid.threads);
    const int steps = 2 * static_cast<int>(grid.h_per_scale);
    std::vector<double> lags, times;
    for (int k = 1; k <= steps; ++k) {
        lags.push_back(R * R * k / steps);
        times.push_back(R * R + lags.back());
    }
    const auto heats = evolve_many(g, g.nearest(scalar(x0)), times, grid.evolve);
    std::vector<std::size_t> nodes;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (std::abs(g.coord(i)(0) - x0) < R) nodes.push_back(i);
    for (const auto& hv : heats)
        for (std::size_t i : nodes) rep.sup_norm = std::max(rep.sup_norm, hv.values[i]);
    const double dlo = 2.0 * h, dhi = R;
    const double step = std::log(dhi / dlo) / bins;
    rep.maxima.assign(bins, 0.0);
    rep.distances.resize(bins);
    for (int b = 0; b < bins; ++b) rep.distances[b] = dlo * std::exp(step * (b + 0.5));
    // max over pairs by distance bin; per-row partial maxima keep the reduction order fixed
    const std::size_t np = nodes.size(), nt = heats.size();
    std::vector<std::vector<double>> rows(nt * np, std::vector<double>(bins, 0.0));
    parallel_for(nt * np, grid.threads, [&](std::size_t p) {
        const std::size_t ka = p / np, ia = p % np;
        const double va = heats[ka].values[nodes[ia]];
        const double xa = g.coord(nodes[ia])(0);
        for (std::size_t kb = ka; kb < nt; ++kb) {
            const double dt = std::sqrt(lags[kb] - lags[ka]);
            if (dt >= dhi) break;
            for (std::size_t ib = 0; ib < np; ++ib) {
                if (kb == ka && ib <= ia) continue;
                const double dist = dt + std::abs(g.coord(nodes[ib])(0) - xa);
                if (dist < dlo || dist >= dhi) continue;
                const int bin = std::min(bins - 1, static_cast<int>(std::log(dist / dlo) / step));
                const double diff = std::abs(heats[kb].values[nodes[ib]] - va);
                rows[p][bin] = std::max(rows[p][bin], diff);
            }
        }
    });
    for (const auto& row : rows)
        for (int b = 0; b < bins; ++b) rep.maxima[b] = std::max(rep.maxima[b], row[b]);
    std::vector<double> lx, ly;
    for (int b = 0; b < bins; ++b) {
        rep.maxima[b] /= rep.sup_norm;
        if (rep.maxima[b] <= 1e-12) continue;
        lx.push_back(std::log(rep.distances[b]));
        ly.push_back(std::log(rep.maxima[b]));
    }
    if (lx.size() < 3) {
        rep.resolved = false;
        return rep;
    }
    const auto f = stats::ols(lx, ly);
    rep.kappa = f.slope;
    rep.kappa_se = f.slope_se;
    rep.lo = f.slope - 1.96 * f.slope_se;
    rep.hi = f.slope + 1.96 * f.slope_se;
    return rep;
}

Record HolderReport::to_record() const {
    Record rec;
    rec.set("check", "holder");
    rec.set("R", R);
    rec.set("kappa", kappa);
    rec.set("kappa.se", kappa_se);
    rec.set("kappa.lo", lo);
    rec.set("kappa.hi", hi);
    rec.set("sup_norm", sup_norm);
    rec.set("distances", distances);
    rec.set("maxima", maxima);
    rec.set("resolved", resolved ? "true" : "false");
    return rec;
}

// ------------------------------------------------------------------ tightness

TightnessReport tightness_check(const Model& model, double x, const std::vector<double>& times,
                                const std::vector<double>& multiples, const SimConfig& config, double c1,
                                double min_count, std::size_t n_min, std::size_t n_max) {
    require_1d(model, "tightness_check");
    TightnessReport rep;
    rep.c1 = c1;
    if (model.kernel.is_zero()) {
        rep.skipped = true;
        rep.reason = "model has no jumps; the tightness estimate is jump-driven and does not apply";
        return rep;
    }
    if (c1 < 2.0) throw DomainError("tightness_check: c1 must be at least 2");
    for (double m : multiples)
        if (m < 1.0) throw DomainError("tightness_check: displacements must be at least c1 phi~^{-1}(t)");
    const ScaleFunction& phi = model.kernel.scale();
    const auto phi_tilde = [&](double r) { return std::min(r * r, phi(r)); };
    std::uint64_t stream = 0;
    rep.constant = kInf;
    bool all_hit = true;
    for (double t : times) {
        const double rt = phi.tilde_inverse(t);
        for (double m : multiples) {
            TightnessPoint pt;
            pt.t = t;
            pt.displacement = m * c1 * rt;
            pt.predicted = t * rt / (pt.displacement * phi_tilde(pt.displacement));
            const double want = std::ceil(min_count / pt.predicted);
            pt.n = static_cast<std::size_t>(std::clamp(want, static_cast<double>(n_min), static_cast<double>(n_max)));
            SimConfig cfg = config;
            cfg.stream = config.stream * 1000 + stream++;
            cfg.dt = std::min(config.dt, t / 100.0);
            const auto ens = simulate_paths(model, scalar(x), t, {t}, cfg, pt.n);
            std::size_t hits = 0;
            for (const auto& p : ens.paths) {
                if (p.truncated || p.killed || p.budget_exceeded) continue;
                if (std::abs(p.positions[0](0) - (x + pt.displacement)) < c1 * rt) ++hits;
            }
            pt.hits = stats::proportion_ci(hits, pt.n);
            pt.ratio = pt.hits.p / pt.predicted;
            pt.ratio_lo = pt.hits.lo / pt.predicted;
            if (hits == 0) {
                all_hit = false;
                std::ostringstream ss;
                ss << "zero hits at t = " << t << ", D = " << pt.displacement << " with n = " << pt.n
                   << "; predicted probability " << pt.predicted << " suggests n >= " << want;
                rep.reason = ss.str();
            }
            rep.constant = std::min(rep.constant, pt.ratio_lo);
            rep.points.push_back(pt);
        }
    }
    rep.pass = all_hit && rep.constant > 0.0;
    return rep;
}

Record TightnessReport::to_record() const {
    Record rec;
    rec.set("check", "tightness");
    rec.set("verdict", skipped ? "SKIPPED" : (pass ? "PASS" : "FAIL"));
    rec.set("c1", c1);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const std::string p = "point." + std::to_string(i);
        rec.set(p + ".t", points[i].t);
        rec.set(p + ".D", points[i].displacement);
        rec.set(p + ".predicted", points[i].predicted);
        rec.set(p + ".n", static_cast<double>(points[i].n));
        rec.set(p + ".p", points[i].hits.p);
        rec.set(p + ".ratio", points[i].ratio);
        rec.set(p + ".ratio_lo", points[i].ratio_lo);
    }
    rec.set("constant", constant);
    if (!reason.empty()) rec.set("reason", reason);
    return rec;
}

// ------------------------------------------------------------------ Davies

DaviesFit fit_davies(const std::vector<DensitySample>& fit, const std::vector<DensitySample>& holdout, double lambda,
                     double delta, int d, const std::vector<double>& c2_grid) {
    if (fit.empty() || c2_grid.empty()) throw DomainError("fit_davies: empty data or grid");
    DaviesFit out;
    out.lambda = lambda;
    out.delta = delta;
    out.fitted_points = fit.size();
    double best = kInf;
    for (double c2 : c2_grid) {
        std::vector<double> b(fit.size());
        double c1 = 0.0;
        for (std::size_t i = 0; i < fit.size(); ++i) {
            b[i] = davies_minimized(fit[i].t, fit[i].R, lambda, d, delta, 1.0, c2).value;
            c1 = std::max(c1, fit[i].value / b[i]);
        }
        double score = 0.0;
        for (std::size_t i = 0; i < fit.size(); ++i) score += std::log(c1 * b[i] / fit[i].value);
        score /= static_cast<double>(fit.size());
        if (score < best) {
            best = score;
            out.c1 = c1;
            out.c2 = c2;
        }
    }
    for (const auto& s : holdout) {
        const double bound = davies_minimized(s.t, s.R, lambda, d, delta, out.c1, out.c2).value;
        out.holdout.push_back({s.t, s.R, s.value, bound});
        out.worst_holdout = std::max(out.worst_holdout, s.value / bound);
    }
    // the minimization over s is numerical; allow its relative accuracy
    out.pass = out.worst_holdout <= 1.0 + 1e-9;
    return out;
}

Record DaviesFit::to_record() const {
    Record rec;
    rec.set("check", "davies");
    rec.set("verdict", pass ? "PASS" : "FAIL");
    rec.set("lambda", lambda);
    rec.set("delta", delta);
    rec.set("c1", c1);
    rec.set("c2", c2);
    rec.set("fitted_points", static_cast<double>(fitted_points));
    rec.set("holdout_points", static_cast<double>(holdout.size()));
    rec.set("worst_holdout", worst_holdout);
    return rec;
}

}  // namespace jdlab
