#include "jdlab/scaling.hpp"

#include "jdlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace jdlab {

// ---------------------------------------------------------------- MixtureMeasure

MixtureMeasure MixtureMeasure::atoms(std::vector<std::pair<double, double>> alpha_weight) {
    MixtureMeasure m;
    if (alpha_weight.empty()) throw ValidationError("mixture measure: no atoms");
    std::sort(alpha_weight.begin(), alpha_weight.end());
    for (const auto& [a, w] : alpha_weight) {
        m.alphas_.push_back(a);
        m.weights_.push_back(w);
    }
    m.alpha_lo_ = m.alphas_.front();
    m.alpha_hi_ = m.alphas_.back();
    m.label_ = "atoms";
    m.record_kind_ = "atoms";
    m.validate();
    return m;
}

MixtureMeasure MixtureMeasure::uniform(double alpha_lo, double alpha_hi) {
    if (!(alpha_hi > alpha_lo))
        throw ValidationError("mixture measure: uniform interval must have alpha_hi > alpha_lo");
    MixtureMeasure m = density([&](double) { return 1.0 / (alpha_hi - alpha_lo); }, alpha_lo, alpha_hi,
                               "uniform");
    m.record_kind_ = "uniform";
    return m;
}

MixtureMeasure MixtureMeasure::density(const std::function<double(double)>& f, double alpha_lo,
                                       double alpha_hi, std::string label) {
    MixtureMeasure m;
    const quad::Rule& gl = quad::gauss_legendre(64);
    const double half = 0.5 * (alpha_hi - alpha_lo);
    const double mid = 0.5 * (alpha_hi + alpha_lo);
    for (int i = 0; i < 64; ++i) {
        const double a = mid + half * gl.nodes[i];
        m.alphas_.push_back(a);
        m.weights_.push_back(half * gl.weights[i] * f(a));
    }
    m.alpha_lo_ = alpha_lo;
    m.alpha_hi_ = alpha_hi;
    m.label_ = std::move(label);
    m.record_kind_ = "atoms";
    m.validate();
    return m;
}

double MixtureMeasure::mass() const {
    double s = 0.0;
    for (double w : weights_) s += w;
    return s;
}

void MixtureMeasure::validate() const {
    if (!(alpha_lo_ > 0.0) || !(alpha_hi_ < 2.0))
        throw ValidationError("mixture measure: support must lie inside (0, 2)");
    for (double w : weights_)
        if (!(w >= 0.0)) throw ValidationError("mixture measure: negative weight");
    if (std::abs(mass() - 1.0) > 1e-12)
        throw ValidationError("mixture measure: total mass " + format_double(mass()) + " != 1");
}

Record MixtureMeasure::to_record() const {
    Record rec;
    if (record_kind_ == "uniform") {
        rec.set("uniform", std::vector<double>{alpha_lo_, alpha_hi_});
        return rec;
    }
    std::string s;
    for (std::size_t i = 0; i < alphas_.size(); ++i) {
        if (i) s += ", ";
        s += format_double(alphas_[i]) + ":" + format_double(weights_[i]);
    }
    rec.set("atoms", s);
    return rec;
}

// ---------------------------------------------------------------- ScaleFunction

ScaleFunction ScaleFunction::power(double alpha) {
    if (!(alpha > 0.0)) throw ValidationError("power scale: exponent must be positive");
    ScaleFunction f;
    f.kind_ = ScaleKind::Power;
    f.alpha_ = alpha;
    f.beta1_ = f.beta2_ = alpha;
    // ratio condition holds with c = 1; integral condition needs 1/(2 - alpha)
    f.comp_const_ = alpha < 2.0 ? std::max(1.0, 1.0 / (2.0 - alpha)) : 1.0;
    std::ostringstream ss;
    ss << "r^" << alpha;
    f.description_ = ss.str();
    return f;
}

ScaleFunction ScaleFunction::table(std::vector<double> radii, std::vector<double> values, double beta1,
                                   double beta2, double comp_const, std::string description) {
    if (radii.size() != values.size() || radii.size() < 2)
        throw ValidationError("table scale: need matching radii/values with at least two entries");
    ScaleFunction f;
    f.kind_ = ScaleKind::Table;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (!(radii[i] > 0.0) || !(values[i] > 0.0))
            throw ValidationError("table scale: radii and values must be positive");
        if (i > 0 && (!(radii[i] > radii[i - 1]) || !(values[i] > values[i - 1])))
            throw ValidationError("table scale: radii and values must be strictly increasing");
        f.table_log_r_.push_back(std::log(radii[i]));
        f.table_log_phi_.push_back(std::log(values[i]));
    }
    f.beta1_ = beta1;
    f.beta2_ = beta2;
    f.comp_const_ = comp_const;
    f.description_ = std::move(description);
    if (std::abs(f.eval(1.0) - 1.0) > 1e-12)
        throw ValidationError("table scale: phi(1) must equal 1");
    return f;
}

ScaleFunction mixed_stable_phi(const MixtureMeasure& nu) {
    nu.validate();
    ScaleFunction f;
    f.kind_ = ScaleKind::Mixture;
    f.atom_alpha_ = nu.alphas();
    f.atom_weight_ = nu.weights();
    f.beta1_ = nu.alpha_lo();
    f.beta2_ = nu.alpha_hi();
    f.comp_const_ = std::max(1.0, 1.0 / (2.0 - nu.alpha_hi()));
    f.measure_ = std::make_shared<MixtureMeasure>(nu);
    f.description_ = "mixture(" + nu.label() + ")";
    return f;
}

ScaleFunction ScaleFunction::rescaled(double r) const {
    if (!(r > 0.0)) throw DomainError("rescaled: r must be positive");
    ScaleFunction f;
    f.kind_ = ScaleKind::Rescaled;
    f.parent_ = std::make_shared<ScaleFunction>(*this);
    f.rescale_r_ = r;
    f.rescale_div_ = tilde(r);
    f.beta1_ = beta1_;
    f.beta2_ = beta2_;
    f.comp_const_ = comp_const_;
    f.description_ = description_ + " rescaled at " + format_double(r);
    return f;
}

double ScaleFunction::eval_raw(double r) const {
    switch (kind_) {
        case ScaleKind::Power:
            return std::pow(r, alpha_);
        case ScaleKind::Mixture: {
            // 1 / sum_k w_k r^-a_k, accumulated in log space
            const double lr = std::log(r);
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < atom_alpha_.size(); ++k)
                if (atom_weight_[k] > 0.0) m = std::max(m, -atom_alpha_[k] * lr);
            double s = 0.0;
            for (std::size_t k = 0; k < atom_alpha_.size(); ++k)
                if (atom_weight_[k] > 0.0) s += atom_weight_[k] * std::exp(-atom_alpha_[k] * lr - m);
            return std::exp(-m - std::log(s));
        }
        case ScaleKind::Table: {
            const double lr = std::log(r);
            const auto& xs = table_log_r_;
            const auto& ys = table_log_phi_;
            std::size_t i;
            if (lr <= xs.front()) {
                i = 0;
            } else if (lr >= xs.back()) {
                i = xs.size() - 2;
            } else {
                i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), lr) - xs.begin()) - 1;
            }
            const double slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
            return std::exp(ys[i] + slope * (lr - xs[i]));
        }
        case ScaleKind::Rescaled:
            return parent_->eval(rescale_r_ * r) / rescale_div_;
    }
    return 0.0;
}

double ScaleFunction::eval(double r) const {
    if (!(r >= 0.0)) throw DomainError("phi: radius must be non-negative");
    if (r == 0.0) return 0.0;
    if (std::isinf(r)) return std::numeric_limits<double>::infinity();
    return eval_raw(r);
}

double ScaleFunction::inverse_bisect(double t) const {
    const double c = comp_const_;
    // sandwich c^-1 r^b2 <= phi <= c r^b1 on (0,1], c^-1 r^b1 <= phi <= c r^b2 on [1,inf)
    double lo = std::min(std::pow(t / c, 1.0 / beta1_), std::pow(t / c, 1.0 / beta2_));
    double hi = std::max(std::pow(c * t, 1.0 / beta1_), std::pow(c * t, 1.0 / beta2_));
    if (kind_ == ScaleKind::Rescaled) {
        // phi_r is not normalized at 1; bracket through the parent
        return parent_->inverse(t * rescale_div_) / rescale_r_;
    }
    int expansions = 0;
    while (!(eval_raw(lo) <= t) && expansions < 64) {
        lo *= 0.5;
        ++expansions;
    }
    while (!(eval_raw(hi) >= t) && expansions < 128) {
        hi *= 2.0;
        ++expansions;
    }
    if (!(eval_raw(lo) <= t) || !(eval_raw(hi) >= t)) {
        std::ostringstream ss;
        ss << "phi_inverse: bracketing failed for t=" << t << " (lo=" << lo << ", phi(lo)="
           << eval_raw(lo) << ", hi=" << hi << ", phi(hi)=" << eval_raw(hi) << ", " << description_
           << ")";
        throw NumericError(ss.str());
    }
    double llo = std::log(lo);
    double lhi = std::log(hi);
    for (int it = 0; it < 200 && lhi - llo > 1e-15 * std::max(1.0, std::abs(llo)); ++it) {
        const double mid = 0.5 * (llo + lhi);
        if (eval_raw(std::exp(mid)) < t) {
            llo = mid;
        } else {
            lhi = mid;
        }
    }
    return std::exp(0.5 * (llo + lhi));
}

double ScaleFunction::inverse(double t) const {
    if (!(t >= 0.0)) throw DomainError("phi_inverse: t must be non-negative");
    if (t == 0.0) return 0.0;
    if (std::isinf(t)) return std::numeric_limits<double>::infinity();
    if (kind_ == ScaleKind::Power) return std::pow(t, 1.0 / alpha_);
    return inverse_bisect(t);
}

double ScaleFunction::tilde(double r) const {
    if (!(r >= 0.0)) throw DomainError("phi_tilde: radius must be non-negative");
    return std::min(r * r, eval(r));
}

double ScaleFunction::tilde_inverse(double t) const {
    if (!(t >= 0.0)) throw DomainError("phi_tilde_inverse: t must be non-negative");
    return std::max(std::sqrt(t), inverse(t));
}

Record ScaleFunction::to_record() const {
    Record rec;
    switch (kind_) {
        case ScaleKind::Power:
            rec.set("kind", "power");
            rec.set("alpha", alpha_);
            break;
        case ScaleKind::Mixture:
            rec.set("kind", "mixture");
            rec.merge(measure_->to_record());
            break;
        case ScaleKind::Table: {
            rec.set("kind", "table");
            std::vector<double> rs, vs;
            for (std::size_t i = 0; i < table_log_r_.size(); ++i) {
                rs.push_back(std::exp(table_log_r_[i]));
                vs.push_back(std::exp(table_log_phi_[i]));
            }
            rec.set("radii", rs);
            rec.set("values", vs);
            rec.set("beta1", beta1_);
            rec.set("beta2", beta2_);
            rec.set("comp_const", comp_const_);
            break;
        }
        case ScaleKind::Rescaled:
            throw ValidationError("rescaled scale functions are derived and have no record form");
    }
    rec.set("phi_at_1", eval(1.0));
    return rec;
}

ScaleFunction ScaleFunction::from_record(const Record& rec) {
    const std::string kind = rec.get_string("kind");
    ScaleFunction f;
    if (kind == "power") {
        f = power(rec.get_double("alpha"));
    } else if (kind == "mixture") {
        if (rec.has("uniform")) {
            const auto lohi = rec.get_list("uniform");
            if (lohi.size() != 2) throw RecordError("uniform needs 'lo, hi'", rec.find("uniform")->line, "uniform");
            f = mixed_stable_phi(MixtureMeasure::uniform(lohi[0], lohi[1]));
        } else {
            const auto* e = rec.find("atoms");
            if (!e) throw RecordError("mixture scale needs 'atoms' or 'uniform'", 0, "atoms");
            std::vector<std::pair<double, double>> aw;
            std::stringstream ss(e->value);
            std::string item;
            while (std::getline(ss, item, ',')) {
                const auto colon = item.find(':');
                if (colon == std::string::npos)
                    throw RecordError("atom '" + item + "' is not alpha:weight", e->line, "atoms");
                try {
                    aw.emplace_back(std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
                } catch (const std::exception&) {
                    throw RecordError("atom '" + item + "' is not alpha:weight", e->line, "atoms");
                }
            }
            f = mixed_stable_phi(MixtureMeasure::atoms(std::move(aw)));
        }
    } else if (kind == "table") {
        f = table(rec.get_list("radii"), rec.get_list("values"), rec.get_double("beta1"),
                  rec.get_double("beta2"), rec.get_double("comp_const"));
    } else {
        const auto* e = rec.find("kind");
        throw RecordError("unknown scale kind '" + kind + "'", e ? e->line : 0, "kind");
    }
    if (rec.has("phi_at_1") && std::abs(rec.get_double("phi_at_1") - f.eval(1.0)) > 1e-12) {
        throw RecordError("normalization check failed: phi(1) = " + format_double(f.eval(1.0)),
                          rec.find("phi_at_1")->line, "phi_at_1");
    }
    return f;
}

// ---------------------------------------------------------------- free functions

double phi_eval(const ScaleFunction& phi, double r) { return phi.eval(r); }
double phi_inverse(const ScaleFunction& phi, double t) { return phi.inverse(t); }
double phi_tilde(const ScaleFunction& phi, double r) { return phi.tilde(r); }
double phi_tilde_inverse(const ScaleFunction& phi, double t) { return phi.tilde_inverse(t); }

std::vector<double> log_grid(double lo, double hi, int per_decade) {
    const int n = std::max(2, static_cast<int>(std::lround(std::log10(hi / lo) * per_decade)) + 1);
    std::vector<double> g(n);
    const double step = std::log(hi / lo) / (n - 1);
    for (int i = 0; i < n; ++i) g[i] = lo * std::exp(step * i);
    g.back() = hi;
    return g;
}

double small_scale_integral(const ScaleFunction& phi, double r, bool* converged) {
    // int_0^r s/phi(s) ds = int_{-inf}^{log r} e^{2u}/phi(e^u) du, integrated in chunks of
    // width 5 until a chunk adds less than 1e-13 of the running total
    const double scale = r * r / phi.eval(r);
    const double tol = 1e-10 * scale;
    const auto integrand = [&](double u) {
        const double s = std::exp(u);
        return s * (s / phi.eval(s));
    };
    const double lr = std::log(r);
    double total = 0.0;
    bool ok = true;
    const double width = 5.0;
    const double kLogFloor = std::log(1e-150);
    int chunk = 0;
    for (; chunk < 200; ++chunk) {
        const double hi = lr - chunk * width;
        const auto res = quad::adaptive_simpson(integrand, hi - width, hi, tol / 8.0);
        ok = ok && res.converged;
        total += res.value;
        if (res.value < 1e-13 * total) break;
        if (hi - width < kLogFloor) break;
    }
    if (chunk >= 199 || lr - (chunk + 1) * width < kLogFloor) {
        // integrand did not decay before underflow: divergent
        const double last = integrand(lr - chunk * width);
        if (last > 1e-8 * scale) ok = false;
    }
    if (converged) *converged = ok;
    return total;
}

ScalingReport check_scaling_conditions(const ScaleFunction& phi, const std::vector<double>& grid,
                                       double tol) {
    ScalingReport rep;
    rep.exponents_valid = phi.beta1() > 0.0 && phi.beta1() <= phi.beta2() && phi.beta2() < 2.0;
    std::vector<double> vals(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) vals[i] = phi.eval(grid[i]);
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(vals[i] > vals[i - 1])) rep.monotone = false;

    rep.ratio_constant = 1.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t j = i + 1; j < grid.size(); ++j) {
            const double q = grid[j] / grid[i];
            const double ratio = vals[j] / vals[i];
            const double lower = std::pow(q, phi.beta1()) / ratio;  // needs <= c
            const double upper = ratio / std::pow(q, phi.beta2());  // needs <= c
            const double worst = std::max(lower, upper);
            if (worst > rep.ratio_constant) {
                rep.ratio_constant = worst;
                rep.worst_ratio_r = grid[i];
                rep.worst_ratio_R = grid[j];
            }
        }
    }
    rep.integral_constant = 0.0;
    for (double r : grid) {
        bool conv = true;
        const double integral = small_scale_integral(phi, r, &conv);
        rep.integral_converged = rep.integral_converged && conv;
        const double c = conv ? integral / (r * r / phi.eval(r)) : std::numeric_limits<double>::infinity();
        if (c > rep.integral_constant) {
            rep.integral_constant = c;
            rep.worst_integral_r = r;
        }
    }
    const double budget = phi.comp_const() * (1.0 + tol);
    rep.pass = rep.exponents_valid && rep.monotone && rep.integral_converged &&
               rep.ratio_constant <= budget && rep.integral_constant <= budget;
    if (!rep.exponents_valid) {
        rep.reason = "exponents must satisfy 0 < beta1 <= beta2 < 2";
    } else if (!rep.monotone) {
        rep.reason = "phi is not strictly increasing on the grid";
    } else if (!rep.integral_converged) {
        rep.reason = "integral condition diverges";
    } else if (rep.ratio_constant > budget) {
        rep.reason = "ratio condition exceeds declared constant";
    } else if (rep.integral_constant > budget) {
        rep.reason = "integral condition exceeds declared constant";
    }
    return rep;
}

}  // namespace jdlab
