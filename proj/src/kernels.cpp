#include "jdlab/kernels.hpp"

#include "jdlab/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace jdlab {

namespace {

Mat scalar_mat(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return m;
}

Mat rotation_matrix(double theta, double lo, double hi) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Mat a(2, 2);
    a(0, 0) = lo * c * c + hi * s * s;
    a(1, 1) = lo * s * s + hi * c * c;
    a(0, 1) = a(1, 0) = (lo - hi) * c * s;
    return a;
}

Mat rotation_matrix_dtheta(double theta, double lo, double hi) {
    const double c2 = std::cos(2.0 * theta);
    const double s2 = std::sin(2.0 * theta);
    Mat a(2, 2);
    a(0, 0) = (hi - lo) * s2;
    a(1, 1) = -(hi - lo) * s2;
    a(0, 1) = a(1, 0) = (lo - hi) * c2;
    return a;
}

}  // namespace

// ---------------------------------------------------------------- DiffusionField

DiffusionField DiffusionField::identity(int d, double scale) {
    if (d < 1 || d > kMaxDim) throw DomainError("diffusion field: dimension must be 1, 2 or 3");
    if (!(scale > 0.0)) throw ValidationError("identity diffusion: scale must be positive");
    DiffusionField f;
    f.d_ = d;
    f.kind_ = DiffusionKind::Identity;
    f.eval_ = [d, scale](const Vec&) -> Mat { return scale * Mat::Identity(d, d); };
    f.gradient_ = [d](const Vec&) {
        std::array<Mat, kMaxDim> g;
        for (auto& m : g) m = Mat::Zero(d, d);
        return g;
    };
    f.ellipticity_ = std::max(scale, 1.0 / scale);
    f.params_ = {scale};
    f.label_ = scale == 1.0 ? "identity" : "identity x " + format_double(scale);
    return f;
}

DiffusionField DiffusionField::scalar_profile(double base, double amplitude, double frequency) {
    if (!(base > std::abs(amplitude)))
        throw ValidationError("scalar profile: base must exceed |amplitude| for ellipticity");
    DiffusionField f;
    f.d_ = 1;
    f.kind_ = DiffusionKind::ScalarProfile;
    f.eval_ = [=](const Vec& x) { return scalar_mat(base + amplitude * std::sin(frequency * x(0))); };
    f.gradient_ = [=](const Vec& x) {
        std::array<Mat, kMaxDim> g;
        g[0] = scalar_mat(amplitude * frequency * std::cos(frequency * x(0)));
        return g;
    };
    f.ellipticity_ = std::max(base + std::abs(amplitude), 1.0 / (base - std::abs(amplitude)));
    f.params_ = {base, amplitude, frequency};
    f.label_ = "scalar-profile";
    return f;
}

DiffusionField DiffusionField::rotation_field(double lo, double hi, double twist) {
    if (!(lo > 0.0) || !(hi >= lo)) throw ValidationError("rotation field: need 0 < lo <= hi");
    DiffusionField f;
    f.d_ = 2;
    f.kind_ = DiffusionKind::RotationField;
    f.eval_ = [=](const Vec& x) {
        return rotation_matrix(twist * (std::sin(x(0)) + std::cos(x(1))), lo, hi);
    };
    f.gradient_ = [=](const Vec& x) {
        const double theta = twist * (std::sin(x(0)) + std::cos(x(1)));
        const Mat da = rotation_matrix_dtheta(theta, lo, hi);
        std::array<Mat, kMaxDim> g;
        g[0] = da * (twist * std::cos(x(0)));
        g[1] = da * (-twist * std::sin(x(1)));
        return g;
    };
    f.ellipticity_ = std::max(hi, 1.0 / lo);
    f.params_ = {lo, hi, twist};
    f.label_ = "rotation-field";
    return f;
}

DiffusionField DiffusionField::table(double x_lo, double x_hi, std::vector<double> values) {
    if (values.size() < 2 || !(x_hi > x_lo)) throw ValidationError("diffusion table: need >= 2 values on x_lo < x_hi");
    double vmin = values[0];
    double vmax = values[0];
    for (double v : values) {
        if (!(v > 0.0)) throw ValidationError("diffusion table: values must be positive");
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    DiffusionField f;
    f.d_ = 1;
    f.kind_ = DiffusionKind::Table;
    const double step = (x_hi - x_lo) / static_cast<double>(values.size() - 1);
    auto locate = [=](double x, double& frac) {
        const double u = (x - x_lo) / step;
        const auto last = static_cast<double>(values.size() - 2);
        const double i = std::clamp(std::floor(u), 0.0, last);
        frac = u - i;
        return static_cast<std::size_t>(i);
    };
    f.eval_ = [=](const Vec& x) {
        if (x(0) <= x_lo) return scalar_mat(values.front());
        if (x(0) >= x_hi) return scalar_mat(values.back());
        double frac = 0.0;
        const std::size_t i = locate(x(0), frac);
        return scalar_mat(values[i] + frac * (values[i + 1] - values[i]));
    };
    f.gradient_ = [=](const Vec& x) {
        std::array<Mat, kMaxDim> g;
        if (x(0) <= x_lo || x(0) >= x_hi) {
            g[0] = scalar_mat(0.0);
        } else {
            double frac = 0.0;
            const std::size_t i = locate(x(0), frac);
            g[0] = scalar_mat((values[i + 1] - values[i]) / step);
        }
        return g;
    };
    f.ellipticity_ = std::max(vmax, 1.0 / vmin);
    f.params_ = {x_lo, x_hi};
    f.params_.insert(f.params_.end(), values.begin(), values.end());
    f.label_ = "table";
    return f;
}

DiffusionField DiffusionField::custom(int d, Evaluator a, double ellipticity, std::optional<Gradient> gradient,
                                      std::string label) {
    if (d < 1 || d > kMaxDim) throw DomainError("diffusion field: dimension must be 1, 2 or 3");
    DiffusionField f;
    f.d_ = d;
    f.kind_ = DiffusionKind::Custom;
    f.eval_ = std::move(a);
    if (gradient) f.gradient_ = std::move(*gradient);
    f.ellipticity_ = ellipticity;
    f.label_ = std::move(label);
    return f;
}

std::array<Mat, kMaxDim> DiffusionField::gradient(const Vec& x) const {
    if (!gradient_) throw ValidationError("diffusion field '" + label_ + "' has no analytic gradient");
    return gradient_(x);
}

Record DiffusionField::to_record() const {
    Record rec;
    switch (kind_) {
        case DiffusionKind::Identity:
            rec.set("kind", "identity");
            rec.set("scale", params_[0]);
            break;
        case DiffusionKind::ScalarProfile:
            rec.set("kind", "scalar-profile");
            rec.set("base", params_[0]);
            rec.set("amplitude", params_[1]);
            rec.set("frequency", params_[2]);
            break;
        case DiffusionKind::RotationField:
            rec.set("kind", "rotation-field");
            rec.set("lo", params_[0]);
            rec.set("hi", params_[1]);
            rec.set("twist", params_[2]);
            break;
        case DiffusionKind::Table:
            rec.set("kind", "table");
            rec.set("x_lo", params_[0]);
            rec.set("x_hi", params_[1]);
            rec.set("values", std::vector<double>(params_.begin() + 2, params_.end()));
            break;
        case DiffusionKind::Custom:
            throw ValidationError("custom diffusion fields have no record form");
    }
    rec.set("ellipticity", ellipticity_);
    return rec;
}

DiffusionField DiffusionField::from_record(const Record& rec, int d) {
    const std::string kind = rec.get_string("kind");
    DiffusionField f;
    auto need_dim = [&](int want) {
        if (d != want) {
            const auto* e = rec.find("kind");
            throw RecordError("diffusion kind '" + kind + "' requires dimension " + std::to_string(want),
                              e ? e->line : 0, "kind");
        }
    };
    try {
        if (kind == "identity") {
            f = identity(d, rec.get_double("scale", 1.0));
        } else if (kind == "scalar-profile") {
            need_dim(1);
            f = scalar_profile(rec.get_double("base", 1.0), rec.get_double("amplitude", 0.5),
                               rec.get_double("frequency", 1.0));
        } else if (kind == "rotation-field") {
            need_dim(2);
            f = rotation_field(rec.get_double("lo", 0.7), rec.get_double("hi", 1.3), rec.get_double("twist", 1.0));
        } else if (kind == "table") {
            need_dim(1);
            f = table(rec.get_double("x_lo"), rec.get_double("x_hi"), rec.get_list("values"));
        } else {
            const auto* e = rec.find("kind");
            throw RecordError("unknown diffusion kind '" + kind + "'", e ? e->line : 0, "kind");
        }
    } catch (const ValidationError& err) {
        const auto* e = rec.find("kind");
        throw RecordError(err.what(), e ? e->line : 0, "kind");
    }
    if (rec.has("ellipticity")) f.ellipticity_ = rec.get_double("ellipticity");
    return f;
}

Vec divergence_drift(const DiffusionField& a, const Vec& x, double h) {
    const int d = a.dim();
    Vec b = Vec::Zero(d);
    if (a.has_gradient()) {
        const auto g = a.gradient(x);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) b(j) += 0.5 * g[i](i, j);
        return b;
    }
    if (!(h > 0.0)) throw DomainError("divergence_drift: finite-difference step must be positive");
    for (int i = 0; i < d; ++i) {
        Vec xp = x;
        Vec xm = x;
        xp(i) += h;
        xm(i) -= h;
        const Mat diff = (a(xp) - a(xm)) / (2.0 * h);
        for (int j = 0; j < d; ++j) b(j) += 0.5 * diff(i, j);
    }
    return b;
}

EllipticityReport check_uniform_ellipticity(const DiffusionField& a, const std::vector<Vec>& points,
                                            const std::vector<Vec>& directions) {
    if (points.empty()) throw ValidationError("check_uniform_ellipticity: no sample points");
    EllipticityReport rep;
    rep.c_low = std::numeric_limits<double>::infinity();
    rep.c_high = -std::numeric_limits<double>::infinity();
    for (const Vec& x : points) {
        const Mat m = a(x);
        const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
            std::ostringstream ss;
            ss << "diffusion matrix not symmetric at x = " << x.transpose() << " (defect " << asym << ")";
            throw ValidationError(ss.str());
        }
        // extremes over all directions are the eigenvalues; sampled directions stay inside them
        Eigen::SelfAdjointEigenSolver<Mat> eig(m);
        double lo = eig.eigenvalues().minCoeff();
        double hi = eig.eigenvalues().maxCoeff();
        for (const Vec& xi : directions) {
            const double q = xi.dot(m * xi) / xi.squaredNorm();
            lo = std::min(lo, q);
            hi = std::max(hi, q);
        }
        if (lo < rep.c_low) {
            rep.c_low = lo;
            rep.argmin_point = x;
        }
        if (hi > rep.c_high) {
            rep.c_high = hi;
            rep.argmax_point = x;
        }
    }
    const double lambda = a.ellipticity();
    rep.pass = rep.c_low >= (1.0 / lambda) * (1.0 - 1e-12) && rep.c_high <= lambda * (1.0 + 1e-12);
    return rep;
}

// ---------------------------------------------------------------- JumpKernel

JumpKernel JumpKernel::none(int d) {
    if (d < 1 || d > kMaxDim) throw DomainError("jump kernel: dimension must be 1, 2 or 3");
    JumpKernel j;
    j.d_ = d;
    j.zero_ = true;
    j.kappa_low_ = j.kappa_up_ = 0.0;
    j.mod_mid_ = 0.0;
    j.label_ = "none";
    return j;
}

JumpKernel JumpKernel::stable_like(int d, ScaleFunction phi, double kappa) {
    if (d < 1 || d > kMaxDim) throw DomainError("jump kernel: dimension must be 1, 2 or 3");
    if (!(kappa > 0.0)) throw ValidationError("jump kernel: kappa must be positive");
    JumpKernel j;
    j.d_ = d;
    j.phi_ = std::move(phi);
    j.mod_mid_ = kappa;
    j.kappa_low_ = j.kappa_up_ = kappa;
    j.label_ = "stable-like(" + j.phi_.description() + ")";
    return j;
}

JumpKernel JumpKernel::midpoint_cosine(int d, ScaleFunction phi, double mid, double amp) {
    if (d < 1 || d > kMaxDim) throw DomainError("jump kernel: dimension must be 1, 2 or 3");
    if (!(amp >= 0.0) || !(mid > amp)) throw ValidationError("midpoint-cosine modulation: need mid > amp >= 0");
    JumpKernel j;
    j.d_ = d;
    j.phi_ = std::move(phi);
    j.modulation_ = ModulationKind::MidpointCosine;
    j.mod_mid_ = mid;
    j.mod_amp_ = amp;
    j.kappa_low_ = mid - amp;
    j.kappa_up_ = mid + amp;
    j.invariant_ = amp == 0.0;
    j.label_ = "midpoint-cosine(" + j.phi_.description() + ")";
    return j;
}

JumpKernel JumpKernel::custom(int d, Evaluator fn, ScaleFunction phi, double kappa_low, double kappa_up,
                              bool comparable, bool translation_invariant, std::string label) {
    if (d < 1 || d > kMaxDim) throw DomainError("jump kernel: dimension must be 1, 2 or 3");
    JumpKernel j;
    j.d_ = d;
    j.custom_ = std::move(fn);
    j.phi_ = std::move(phi);
    j.kappa_low_ = comparable ? kappa_low : 0.0;
    j.kappa_up_ = kappa_up;
    j.comparable_ = comparable;
    j.invariant_ = translation_invariant;
    j.label_ = std::move(label);
    return j;
}

JumpKernel JumpKernel::truncated(double radius) const {
    if (!(radius > 0.0)) throw DomainError("truncated: radius must be positive");
    JumpKernel j = *this;
    j.cutoff_ = std::min(cutoff_, radius);
    j.comparable_ = false;
    j.label_ = label_ + " cut at " + format_double(radius);
    return j;
}

double JumpKernel::operator()(const Vec& x, const Vec& y) const {
    if (zero_) return 0.0;
    const double rho = (y - x).norm();
    if (rho > cutoff_) return 0.0;
    if (rho == 0.0) return std::numeric_limits<double>::infinity();
    if (custom_) return custom_(x, y);
    const double base = 1.0 / (std::pow(rho, d_) * phi_.eval(rho));
    if (modulation_ == ModulationKind::Constant) return mod_mid_ * base;
    double prod = 1.0;
    for (int i = 0; i < d_; ++i) prod *= std::cos(0.5 * (x(i) + y(i)));
    return (mod_mid_ + mod_amp_ * prod / (1.0 + rho * rho)) * base;
}

double JumpKernel::majorant(double rho) const {
    if (zero_ || rho > cutoff_) return 0.0;
    return kappa_up_ / (std::pow(rho, d_) * phi_.eval(rho));
}

double JumpKernel::kappa0() const { return zero_ ? 0.0 : kappa_up_ * phi_.comp_const(); }

double JumpKernel::beta() const { return phi_.beta2(); }

double JumpKernel::b0() const {
    if (zero_) return 0.0;
    const double c = phi_.comp_const();
    return kappa_up_ * quad::sphere_area(d_) * c * c / phi_.beta1();
}

std::pair<double, double> JumpKernel::tail_product_window() const {
    if (zero_) return {0.0, 0.0};
    const double s = quad::sphere_area(d_);
    const double c = phi_.comp_const();
    const double lower = comparable_ ? kappa_low_ * s / (c * phi_.beta2()) : 0.0;
    return {lower, kappa_up_ * s * c / phi_.beta1()};
}

double JumpKernel::integrability_budget() const {
    if (zero_) return 0.0;
    const double c = phi_.comp_const();
    return kappa_up_ * quad::sphere_area(d_) * (c + c / phi_.beta1());
}

Record JumpKernel::to_record() const {
    Record rec;
    if (zero_) {
        rec.set("kind", "none");
        return rec;
    }
    if (custom_) throw ValidationError("custom jump kernels have no record form");
    const bool plain = modulation_ == ModulationKind::Constant;
    if (plain && phi_.kind() == ScaleKind::Power) {
        rec.set("kind", "power");
    } else if (plain && phi_.kind() == ScaleKind::Mixture) {
        rec.set("kind", "mixture");
    } else {
        rec.set("kind", "custom-comparability");
    }
    rec.merge(phi_.to_record(), "scale.");
    if (plain) {
        rec.set("modulation", "constant");
        rec.set("kappa", mod_mid_);
    } else {
        rec.set("modulation", "midpoint-cosine");
        rec.set("modulation_mid", mod_mid_);
        rec.set("modulation_amp", mod_amp_);
    }
    if (std::isfinite(cutoff_)) rec.set("cutoff", cutoff_);
    rec.set("kappa_low", kappa_low_);
    rec.set("kappa_up", kappa_up_);
    rec.set("kappa0", kappa0());
    rec.set("beta", beta());
    rec.set("delta0", delta0());
    return rec;
}

JumpKernel JumpKernel::from_record(const Record& rec, int d) {
    const std::string kind = rec.get_string("kind");
    if (kind == "none") return none(d);
    if (kind != "power" && kind != "mixture" && kind != "custom-comparability") {
        const auto* e = rec.find("kind");
        throw RecordError("unknown kernel kind '" + kind + "'", e ? e->line : 0, "kind");
    }
    const ScaleFunction phi = ScaleFunction::from_record(rec.sub("scale."));
    const std::string want = kind == "power" ? "power" : kind == "mixture" ? "mixture" : "";
    if (!want.empty() && rec.get_string("scale.kind") != want) {
        const auto* e = rec.find("scale.kind");
        throw RecordError("kernel kind '" + kind + "' needs scale.kind = " + want, e ? e->line : 0, "scale.kind");
    }
    JumpKernel j;
    try {
        const std::string mod = rec.get_string("modulation", "constant");
        if (mod == "constant") {
            j = stable_like(d, phi, rec.get_double("kappa", 1.0));
        } else if (mod == "midpoint-cosine") {
            j = midpoint_cosine(d, phi, rec.get_double("modulation_mid"), rec.get_double("modulation_amp"));
        } else {
            const auto* e = rec.find("modulation");
            throw RecordError("unknown modulation '" + mod + "'", e ? e->line : 0, "modulation");
        }
    } catch (const ValidationError& err) {
        throw RecordError(err.what(), 0, "modulation");
    }
    if (rec.has("cutoff")) j = j.truncated(rec.get_double("cutoff"));
    // declared comparability constants are taken as stated; validation checks them
    if (rec.has("kappa_low")) j.kappa_low_ = rec.get_double("kappa_low");
    if (rec.has("kappa_up")) j.kappa_up_ = rec.get_double("kappa_up");
    return j;
}

// ---------------------------------------------------------------- radial quadrature

namespace {

struct Directions {
    std::vector<Vec> dirs;
    std::vector<double> weights;
};

Directions directions_for(const JumpKernel& j, const RadialRule& rule) {
    Directions out;
    const int d = j.dim();
    if (d == 1) {
        out.dirs = {Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
        out.weights = {1.0, 1.0};
        return out;
    }
    auto dr = quad::direction_rule(d, rule.angular);
    out.dirs = std::move(dr.directions);
    out.weights = std::move(dr.weights);
    return out;
}

// int_lo^hi f(rho) d rho for f behaving like a power near 0 and infinity; lo == 0 and
// hi == inf are closed with fitted power laws. Returns +inf for a divergent tail.
double radial_integral(const std::function<double(double)>& f, double lo, double hi, const RadialRule& rule) {
    double head = 0.0;
    double a = lo;
    if (lo <= 0.0) {
        a = (std::isfinite(hi) ? hi : 1.0) * 1e-8;
        const double f1 = f(a);
        const double f2 = f(2.0 * a);
        if (f1 > 0.0 && f2 > 0.0) {
            const double gamma = std::log2(f2 / f1) + 1.0;  // f ~ rho^{gamma - 1}
            head = gamma > 0.0 ? f1 * a / gamma : std::numeric_limits<double>::infinity();
        }
    }
    double b = hi;
    double tail = 0.0;
    if (!std::isfinite(hi)) {
        b = std::max(a, 1.0) * 1e6;
        const double f1 = f(b);
        const double f2 = f(2.0 * b);
        if (f1 > 0.0) {
            const double gamma = -(std::log2(f2 / f1) + 1.0);  // f ~ rho^{-1 - gamma}
            tail = gamma > 0.05 ? f1 * b / gamma : std::numeric_limits<double>::infinity();
        }
    }
    if (!(b > a)) return head + tail;
    return head + quad::integrate_log_panels(f, a, b, rule.panels_per_decade, rule.order) + tail;
}

bool isotropic(const JumpKernel& j) { return j.radial(); }

}  // namespace

double shell_integral(const JumpKernel& j, const Vec& x, const std::function<double(double)>& g, double lo,
                      double hi, const RadialRule& rule) {
    if (j.is_zero()) return 0.0;
    if (lo < 0.0 || !(hi > lo)) throw DomainError("shell_integral: need 0 <= lo < hi");
    hi = std::min(hi, j.cutoff());
    if (!(hi > lo)) return 0.0;
    const int d = j.dim();
    const Directions dirs = directions_for(j, rule);
    double total = 0.0;
    const std::size_t used = isotropic(j) ? 1 : dirs.dirs.size();
    // radial kernels are evaluated from the origin so that tiny |z| stay exact
    const Vec base = isotropic(j) ? Vec(Vec::Zero(d)) : x;
    for (std::size_t k = 0; k < used; ++k) {
        const Vec& theta = dirs.dirs[k];
        const auto f = [&](double rho) {
            return g(rho) * std::pow(rho, d - 1) * j(base, Vec(base + rho * theta));
        };
        const double w = isotropic(j) ? quad::sphere_area(d) : dirs.weights[k];
        total += w * radial_integral(f, lo, hi, rule);
    }
    return total;
}

double jump_intensity_tail(const JumpKernel& j, const Vec& x, double lambda, const RadialRule& rule) {
    if (!(lambda > 0.0)) throw DomainError("jump_intensity_tail: lambda must be positive");
    const double v = shell_integral(j, x, [](double) { return 1.0; }, lambda,
                                    std::numeric_limits<double>::infinity(), rule);
    if (!std::isfinite(v)) throw NumericError("jump_intensity_tail: tail quadrature diverges");
    return v;
}

SmallJumpMoments small_jump_moments(const JumpKernel& j, const Vec& x, double eps, const RadialRule& rule) {
    if (!(eps > 0.0)) throw DomainError("small_jump_moments: eps must be positive");
    const int d = j.dim();
    SmallJumpMoments out{Vec::Zero(d), Mat::Zero(d, d), 0.0};
    if (j.is_zero()) return out;
    const double hi = std::min(eps, j.cutoff());
    if (isotropic(j)) {
        const auto f = [&](double rho) {
            Vec y = Vec::Zero(d);
            y(0) = rho;
            return std::pow(rho, d + 1) * j(Vec(Vec::Zero(d)), y);
        };
        const double m2 = quad::sphere_area(d) * radial_integral(f, 0.0, hi, rule);
        out.second = (m2 / d) * Mat::Identity(d, d);
        out.delta = m2;
        return out;
    }
    const Directions dirs = directions_for(j, rule);
    for (std::size_t k = 0; k < dirs.dirs.size(); ++k) {
        const Vec& theta = dirs.dirs[k];
        // odd part only: the first moment exists as a principal value
        const auto f1 = [&](double rho) {
            return 0.5 * std::pow(rho, d) * (j(x, Vec(x + rho * theta)) - j(x, Vec(x - rho * theta)));
        };
        const auto f2 = [&](double rho) { return std::pow(rho, d + 1) * j(x, Vec(x + rho * theta)); };
        out.mean += dirs.weights[k] * radial_integral(f1, 0.0, hi, rule) * theta;
        out.second += dirs.weights[k] * radial_integral(f2, 0.0, hi, rule) * (theta * theta.transpose());
    }
    out.delta = out.second.trace();
    return out;
}

IntegrabilityReport check_J_integrability(const JumpKernel& j, const std::vector<Vec>& points) {
    if (points.empty()) throw ValidationError("check_J_integrability: no sample points");
    IntegrabilityReport rep;
    rep.budget = j.integrability_budget();
    if (j.is_zero()) {
        rep.worst_point = points.front();
        rep.pass = true;
        return rep;
    }
    const auto eval_at = [&](const Vec& x, const RadialRule& rule, double& tail) {
        const double inf = std::numeric_limits<double>::infinity();
        const double head = shell_integral(j, x, [](double r) { return r * r; }, 0.0, 1.0, rule);
        tail = shell_integral(j, x, [](double) { return 1.0; }, 1.0, inf, rule);
        return head + tail;
    };
    const std::size_t used = j.translation_invariant() ? 1 : points.size();
    for (std::size_t i = 0; i < used; ++i) {
        double tail = 0.0;
        const double v = eval_at(points[i], RadialRule{}, tail);
        rep.sup_tail = std::max(rep.sup_tail, tail);
        if (!(v <= rep.sup_value)) {
            rep.sup_value = v;
            rep.worst_point = points[i];
        }
    }
    if (rep.worst_point.size() == 0) rep.worst_point = points.front();
    RadialRule fine;
    fine.panels_per_decade *= 2;
    fine.angular *= 2;
    double tail_fine = 0.0;
    const double refined = eval_at(rep.worst_point, fine, tail_fine);
    rep.refinement_change = std::abs(refined - rep.sup_value) / std::max(std::abs(refined), 1e-300);
    rep.converged = std::isfinite(rep.sup_value) && std::isfinite(refined) && rep.refinement_change < 0.01;
    rep.pass = rep.converged && rep.sup_value <= rep.budget * (1.0 + 1e-9);
    return rep;
}

NondegeneracyReport check_J_lower_nondegeneracy(const JumpKernel& j, const std::vector<double>& radii,
                                                const std::vector<Vec>& base_points,
                                                const std::vector<Vec>& directions) {
    NondegeneracyReport rep;
    rep.radii = radii;
    rep.pass = !radii.empty();
    const int d = j.dim();
    for (double r : radii) {
        double inf = std::numeric_limits<double>::infinity();
        for (const Vec& x0 : base_points) {
            for (const Vec& theta : directions) {
                const Vec y0 = x0 + r * theta.normalized();
                const auto target = quad::ball_rule(y0, r / 16.0, 12, 16);
                auto sources = quad::ball_rule(x0, r / 16.0, 4, 8).points;
                sources.push_back(x0);
                for (const Vec& x : sources) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < target.points.size(); ++k) s += target.weights[k] * j(x, target.points[k]);
                    inf = std::min(inf, s);
                }
            }
        }
        rep.inf_values.push_back(inf);
        const double far = 9.0 * r / 8.0;
        const double vol = quad::ball_volume(d) * std::pow(r / 16.0, d);
        rep.envelope_lower.push_back(j.comparable() && !j.is_zero()
                                         ? j.kappa_low() * vol / (std::pow(far, d) * j.scale()(far))
                                         : 0.0);
        if (!(inf > 0.0)) rep.pass = false;
    }
    return rep;
}

UJSReport check_UJS(const JumpKernel& j, const std::vector<std::pair<Vec, Vec>>& pairs,
                    const std::vector<double>& radii) {
    UJSReport rep;
    const int d = j.dim();
    bool any = false;
    for (const auto& [x, y] : pairs) {
        const double dist = (x - y).norm();
        for (double r : radii) {
            if (!(r > 0.0) || r > std::min(0.5 * dist, 1.0)) continue;
            const auto ball = quad::ball_rule(x, r, 12, 16);
            double integral = 0.0;
            double vol = 0.0;
            for (std::size_t k = 0; k < ball.points.size(); ++k) {
                integral += ball.weights[k] * j(ball.points[k], y);
                vol += ball.weights[k];
            }
            const double jxy = j(x, y);
            if (jxy == 0.0) continue;
            any = true;
            const double ratio = integral > 0.0 ? jxy / (integral / vol) : std::numeric_limits<double>::infinity();
            if (ratio > rep.average_ratio) {
                rep.average_ratio = ratio;
                rep.worst_x = x;
                rep.worst_y = y;
                rep.worst_r = r;
            }
        }
    }
    rep.constant = rep.average_ratio / quad::ball_volume(d);
    rep.pass = any ? std::isfinite(rep.average_ratio) : true;
    return rep;
}

double symmetry_defect(const JumpKernel& j, const std::vector<std::pair<Vec, Vec>>& pairs) {
    double worst = 0.0;
    for (const auto& [x, y] : pairs) {
        const double a = j(x, y);
        const double b = j(y, x);
        const double m = std::max(std::abs(a), std::abs(b));
        if (m > 0.0) worst = std::max(worst, std::abs(a - b) / m);
    }
    return worst;
}

// ---------------------------------------------------------------- Model

Record Model::to_record() const {
    Record rec;
    rec.set("model.name", name);
    rec.set("model.dimension", std::to_string(d));
    rec.merge(diffusion.to_record(), "diffusion.");
    rec.merge(kernel.to_record(), "kernel.");
    return rec;
}

Model Model::from_record(const Record& rec) {
    Model m;
    m.name = rec.get_string("model.name", "unnamed");
    const std::int64_t d = rec.get_int("model.dimension");
    if (d < 1 || d > kMaxDim) {
        throw RecordError("model.dimension must be 1, 2 or 3", rec.find("model.dimension")->line,
                          "model.dimension");
    }
    m.d = static_cast<int>(d);
    m.diffusion = DiffusionField::from_record(rec.sub("diffusion."), m.d);
    m.kernel = JumpKernel::from_record(rec.sub("kernel."), m.d);
    return m;
}

std::vector<Vec> halton_points(int d, int n, double lo, double hi) {
    static constexpr int primes[kMaxDim] = {2, 3, 5};
    std::vector<Vec> pts;
    pts.reserve(n);
    for (int i = 1; i <= n; ++i) {
        Vec p(d);
        for (int k = 0; k < d; ++k) {
            double f = 1.0;
            double r = 0.0;
            int idx = i;
            while (idx > 0) {
                f /= primes[k];
                r += f * (idx % primes[k]);
                idx /= primes[k];
            }
            p(k) = lo + (hi - lo) * r;
        }
        pts.push_back(p);
    }
    return pts;
}

ModelValidation validate_model(const Model& m, int samples, double box, std::uint64_t seed) {
    ModelValidation v;
    if (m.diffusion.dim() != m.d || m.kernel.dim() != m.d) {
        v.failures.push_back("dimension mismatch between model, diffusion field and jump kernel");
        return v;
    }
    const auto points = halton_points(m.d, samples, -box, box);
    std::vector<Vec> dirs = quad::direction_rule(m.d, 16).directions;
    try {
        v.ellipticity = check_uniform_ellipticity(m.diffusion, points, dirs);
        if (!v.ellipticity.pass) v.failures.push_back("ellipticity window violated");
    } catch (const ValidationError& e) {
        v.failures.push_back(e.what());
    }

    if (!m.kernel.is_zero()) {
        const auto scaling = check_scaling_conditions(m.kernel.scale(), log_grid(1e-3, 1e3, 8));
        if (!scaling.pass) v.failures.push_back("scale function: " + scaling.reason);

        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unif(-box, box);
        std::uniform_real_distribution<double> logr(std::log(1e-3), std::log(1e2));
        std::normal_distribution<double> gauss;
        std::vector<std::pair<Vec, Vec>> pairs;
        pairs.reserve(10000);
        for (int i = 0; i < 10000; ++i) {
            Vec x(m.d);
            Vec z(m.d);
            for (int k = 0; k < m.d; ++k) x(k) = unif(rng);
            for (int k = 0; k < m.d; ++k) z(k) = gauss(rng);
            z *= std::exp(logr(rng)) / z.norm();
            pairs.emplace_back(x, Vec(x + z));
        }
        v.symmetry = symmetry_defect(m.kernel, pairs);
        if (v.symmetry > 1e-12) v.failures.push_back("jump kernel is not symmetric");

        v.comparability_low = std::numeric_limits<double>::infinity();
        const double beta = m.kernel.beta();
        for (const auto& [x, y] : pairs) {
            const double rho = (y - x).norm();
            if (rho > m.kernel.cutoff()) continue;
            const double jv = m.kernel(x, y);
            const double prod = jv * std::pow(rho, m.d) * m.kernel.scale()(rho);
            v.comparability_low = std::min(v.comparability_low, prod);
            v.comparability_high = std::max(v.comparability_high, prod);
            if (rho <= m.kernel.delta0())
                v.near_diagonal_ratio =
                    std::max(v.near_diagonal_ratio, jv * std::pow(rho, m.d + beta) / m.kernel.kappa0());
        }
        if (v.comparability_high > m.kernel.kappa_up() * (1.0 + 1e-9))
            v.failures.push_back("jump kernel exceeds its declared upper comparability constant");
        if (m.kernel.comparable() && v.comparability_low < m.kernel.kappa_low() * (1.0 - 1e-9))
            v.failures.push_back("jump kernel falls below its declared lower comparability constant");
        if (v.near_diagonal_ratio > 1.0 + 1e-9)
            v.failures.push_back("near-diagonal bound J <= kappa0 |x-y|^{-d-beta} violated");

        v.integrability = check_J_integrability(m.kernel, points);
        if (!v.integrability.pass) v.failures.push_back("jump kernel integrability check failed");
    } else {
        v.integrability.pass = true;
    }
    v.pass = v.failures.empty();
    return v;
}

std::vector<std::string> model_names() {
    return {"brownian", "brownian2d", "reference", "stable", "mixture", "rotation2d", "modulated2d"};
}

Model make_model(const std::string& name) {
    Model m;
    m.name = name;
    if (name == "brownian") {
        m.d = 1;
        m.diffusion = DiffusionField::identity(1);
        m.kernel = JumpKernel::none(1);
    } else if (name == "brownian2d") {
        m.d = 2;
        m.diffusion = DiffusionField::identity(2);
        m.kernel = JumpKernel::none(2);
    } else if (name == "reference") {
        m.d = 1;
        m.diffusion = DiffusionField::scalar_profile(1.0, 0.5, 1.0);
        m.kernel = JumpKernel::stable_like(1, ScaleFunction::power(1.0), 1.0);
    } else if (name == "stable") {
        m.d = 1;
        m.diffusion = DiffusionField::identity(1, 1e-4);
        m.kernel = JumpKernel::stable_like(1, ScaleFunction::power(1.0), 1.0);
    } else if (name == "mixture") {
        m.d = 1;
        m.diffusion = DiffusionField::scalar_profile(1.0, 0.5, 1.0);
        m.kernel = JumpKernel::stable_like(1, mixed_stable_phi(MixtureMeasure::atoms({{0.5, 0.5}, {1.5, 0.5}})), 1.0);
    } else if (name == "rotation2d") {
        m.d = 2;
        m.diffusion = DiffusionField::rotation_field(0.7, 1.3, 1.0);
        m.kernel = JumpKernel::stable_like(2, mixed_stable_phi(MixtureMeasure::uniform(0.5, 1.5)), 1.0);
    } else if (name == "modulated2d") {
        m.d = 2;
        m.diffusion = DiffusionField::identity(2);
        m.kernel = JumpKernel::midpoint_cosine(2, ScaleFunction::power(1.2), 1.0, 0.5);
    } else {
        throw ConfigError("unknown model '" + name + "'");
    }
    return m;
}

}  // namespace jdlab
