#include "jdlab/kernels.hpp"
#include "jdlab/quadrature.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace jdlab;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

Vec v2(double x, double y) {
    Vec v(2);
    v << x, y;
    return v;
}

std::vector<Vec> line_points(double lo, double hi, int n) {
    std::vector<Vec> pts;
    for (int i = 0; i < n; ++i) pts.push_back(v1(lo + (hi - lo) * i / (n - 1)));
    return pts;
}

// Tail of J(z) = 1/(|z| phi(|z|)) in d = 1 for phi^{-1}(r) = (r^{-1/2} + r^{-3/2}) / 2.
double two_atom_tail(double lambda) { return 2.0 * (std::pow(lambda, -0.5) + std::pow(lambda, -1.5) / 3.0); }

}  // namespace

TEST_CASE("ellipticity extremes") {
    SUBCASE("identity") {
        const auto rep = check_uniform_ellipticity(DiffusionField::identity(2), halton_points(2, 64, -3, 3),
                                                   quad::direction_rule(2, 16).directions);
        CHECK(rep.c_low == doctest::Approx(1.0));
        CHECK(rep.c_high == doctest::Approx(1.0));
        CHECK(rep.pass);
    }
    SUBCASE("scalar profile") {
        auto pts = line_points(-std::numbers::pi / 2, std::numbers::pi / 2, 101);
        const auto rep = check_uniform_ellipticity(DiffusionField::scalar_profile(), pts, {v1(1.0)});
        CHECK(rep.c_low == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(rep.c_high == doctest::Approx(1.5).epsilon(1e-12));
        CHECK(rep.pass);
    }
    SUBCASE("rotation field spectrum is recovered exactly") {
        const auto rep = check_uniform_ellipticity(DiffusionField::rotation_field(0.7, 1.3, 1.0),
                                                   halton_points(2, 256, -4, 4), quad::direction_rule(2, 8).directions);
        CHECK(std::abs(rep.c_low - 0.7) <= 1e-9);
        CHECK(std::abs(rep.c_high - 1.3) <= 1e-9);
    }
    SUBCASE("asymmetric matrix is rejected") {
        const auto bad = DiffusionField::custom(2, [](const Vec&) {
            Mat m(2, 2);
            m << 1.0, 0.1, 0.0, 1.0;
            return m;
        }, 2.0);
        CHECK_THROWS_AS(check_uniform_ellipticity(bad, {v2(0, 0)}, {}), ValidationError);
    }
    SUBCASE("declared window too narrow fails") {
        auto f = DiffusionField::scalar_profile();
        f.set_ellipticity(1.2);
        CHECK_FALSE(check_uniform_ellipticity(f, line_points(-3, 3, 61), {}).pass);
    }
}

TEST_CASE("divergence drift") {
    CHECK(divergence_drift(DiffusionField::identity(2), v2(0.3, -1.0)).norm() == 0.0);
    CHECK(divergence_drift(DiffusionField::scalar_profile(), v1(0.0))(0) == doctest::Approx(0.25));

    // finite differences on the rotation field converge at order 2 to the analytic gradient
    const auto analytic = DiffusionField::rotation_field(0.7, 1.3, 1.0);
    const auto fd_only = DiffusionField::custom(2, [&](const Vec& x) { return analytic(x); }, analytic.ellipticity());
    const Vec x = v2(0.4, -0.9);
    const Vec exact = divergence_drift(analytic, x);
    const double e1 = (divergence_drift(fd_only, x, 0.02) - exact).norm();
    const double e2 = (divergence_drift(fd_only, x, 0.01) - exact).norm();
    const double e3 = (divergence_drift(fd_only, x, 0.005) - exact).norm();
    CHECK(std::log2(e1 / e2) == doctest::Approx(2.0).epsilon(0.05));
    CHECK(std::log2(e2 / e3) == doctest::Approx(2.0).epsilon(0.05));
    // Richardson extrapolation removes the h^2 term
    const Vec rich = (4.0 * divergence_drift(fd_only, x, 0.005) - divergence_drift(fd_only, x, 0.01)) / 3.0;
    CHECK((rich - exact).norm() < 1e-8);
}

TEST_CASE("radial integrals against analytic values") {
    const auto j = JumpKernel::stable_like(1, ScaleFunction::power(0.5), 1.0);
    const Vec x = v1(0.3);
    SUBCASE("integrability of |z|^{-1.5}") {
        const auto rep = check_J_integrability(j, {x});
        CHECK(rep.sup_value == doctest::Approx(16.0 / 3.0).epsilon(1e-8));
        CHECK(rep.sup_tail == doctest::Approx(4.0).epsilon(1e-8));
        CHECK(rep.pass);
    }
    SUBCASE("tail intensity") {
        CHECK(jump_intensity_tail(j, x, 1.0) == doctest::Approx(4.0).epsilon(1e-8));
        double prev = jump_intensity_tail(j, x, 1e-2);
        for (double lam : {0.1, 1.0, 10.0, 100.0, 1e4}) {
            const double v = jump_intensity_tail(j, x, lam);
            CHECK(v < prev);
            prev = v;
        }
        CHECK(prev < 0.05);
    }
    SUBCASE("small-jump second moment") {
        const auto m = small_jump_moments(j, x, 1.0);
        CHECK(m.delta == doctest::Approx(4.0 / 3.0).epsilon(1e-8));
        CHECK(m.mean.norm() == 0.0);
        double prev = 0.0;
        for (double eps : {1e-6, 1e-4, 1e-2, 1e-1, 1.0}) {
            const double dv = small_jump_moments(j, x, eps).delta;
            CHECK(dv > prev);
            prev = dv;
        }
        CHECK(small_jump_moments(j, x, 1e-8).delta < 1e-5);
    }
    SUBCASE("zero kernel") {
        const auto z = JumpKernel::none(1);
        CHECK(check_J_integrability(z, {x}).sup_value == 0.0);
        CHECK(jump_intensity_tail(z, x, 1.0) == 0.0);
    }
    SUBCASE("two-atom mixture tail") {
        const auto jm = JumpKernel::stable_like(1, mixed_stable_phi(MixtureMeasure::atoms({{0.5, 0.5}, {1.5, 0.5}})));
        for (double lam : {0.01, 0.25, 1.0, 30.0})
            CHECK(jump_intensity_tail(jm, x, lam) == doctest::Approx(two_atom_tail(lam)).epsilon(1e-7));
        const auto rep = check_J_integrability(jm, {x});
        CHECK(rep.pass);
        CHECK(rep.refinement_change < 0.01);
    }
    SUBCASE("d = 2 stable kernel: tail = 2 pi / (alpha lambda^alpha)") {
        const auto j2 = JumpKernel::stable_like(2, ScaleFunction::power(1.2), 1.0);
        CHECK(jump_intensity_tail(j2, v2(0, 0), 0.5) ==
              doctest::Approx(2.0 * std::numbers::pi / (1.2 * std::pow(0.5, 1.2))).epsilon(1e-8));
        const auto m = small_jump_moments(j2, v2(0, 0), 0.5);
        // int_0^eps rho^{1-alpha} d rho * 2 pi = 2 pi eps^{0.8} / 0.8
        CHECK(m.delta == doctest::Approx(2.0 * std::numbers::pi * std::pow(0.5, 0.8) / 0.8).epsilon(1e-8));
        CHECK(m.second(0, 1) == doctest::Approx(0.0));
    }
}

TEST_CASE("non-radial kernels") {
    const auto model = make_model("modulated2d");
    const Vec x = v2(0.2, 0.7);
    const auto m = small_jump_moments(model.kernel, x, 0.3);
    CHECK(m.second(0, 1) == doctest::Approx(m.second(1, 0)));
    // trace sits between the kappa bounds applied to the isotropic moment
    const double iso = 2.0 * std::numbers::pi * std::pow(0.3, 0.8) / 0.8;
    CHECK(m.delta >= 0.5 * iso);
    CHECK(m.delta <= 1.5 * iso);
    SUBCASE("tail times phi stays inside the declared window") {
        const auto [lo, hi] = model.kernel.tail_product_window();
        for (double lam : {1e-2, 1e-1, 1.0, 10.0, 100.0}) {
            const double v = jump_intensity_tail(model.kernel, x, lam) * model.kernel.scale()(lam);
            CHECK(v >= lo);
            CHECK(v <= hi);
        }
    }
}

TEST_CASE("tail envelopes for shipped jump models") {
    for (const auto& name : model_names()) {
        const auto m = make_model(name);
        if (m.kernel.is_zero()) continue;
        CAPTURE(name);
        const auto [lo, hi] = m.kernel.tail_product_window();
        const Vec x = Vec::Constant(m.d, 0.37);
        for (double lam : log_grid(1e-2, 1e2, 2)) {
            const double tail = jump_intensity_tail(m.kernel, x, lam);
            const double prod = tail * m.kernel.scale()(lam);
            CHECK(prod >= lo * (1 - 1e-9));
            CHECK(prod <= hi * (1 + 1e-9));
            if (lam <= 1.0) CHECK(tail <= m.kernel.b0() * std::pow(lam, -m.kernel.beta()) * (1 + 1e-9));
        }
    }
}

TEST_CASE("lower nondegeneracy") {
    const auto j = JumpKernel::stable_like(1, ScaleFunction::power(1.0), 1.0);
    const std::vector<Vec> bases = {v1(0.0), v1(1.3)};
    const std::vector<Vec> dirs = {v1(1.0), v1(-1.0)};
    const auto rep = check_J_lower_nondegeneracy(j, {0.01, 0.1, 0.5}, bases, dirs);
    CHECK(rep.pass);
    for (std::size_t i = 0; i < rep.radii.size(); ++i) {
        CHECK(rep.inf_values[i] >= rep.envelope_lower[i]);
        CHECK(rep.inf_values[i] > 0.0);
    }
    SUBCASE("truncation at r/4 kills the placed pair") {
        const double r = 0.1;
        const auto cut = check_J_lower_nondegeneracy(j.truncated(r / 4), {r}, bases, dirs);
        CHECK_FALSE(cut.pass);
        CHECK(cut.inf_values[0] == 0.0);
    }
    SUBCASE("d = 2 isotropic stable kernel") {
        const auto j2 = JumpKernel::stable_like(2, ScaleFunction::power(1.5), 1.0);
        const auto r2 = check_J_lower_nondegeneracy(j2, {0.1}, {v2(0, 0)}, quad::direction_rule(2, 4).directions);
        CHECK(r2.pass);
        CHECK(r2.inf_values[0] >= r2.envelope_lower[0]);
    }
}

TEST_CASE("UJS constants") {
    std::vector<std::pair<Vec, Vec>> pairs = {{v1(0.0), v1(1.0)}, {v1(-0.5), v1(0.5)}, {v1(2.0), v1(2.3)}};
    SUBCASE("power kernel: ball-average ratio near 1 for small r") {
        const auto j = JumpKernel::stable_like(1, ScaleFunction::power(0.8), 1.0);
        const auto rep = check_UJS(j, pairs, {0.001, 0.01});
        CHECK(rep.pass);
        CHECK(rep.average_ratio == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(rep.constant == doctest::Approx(0.5).epsilon(1e-3));
    }
    SUBCASE("comparability kernel: bounded by kappa ratio times phi ratio over the ball") {
        const auto m = make_model("modulated2d");
        std::vector<std::pair<Vec, Vec>> p2 = {{v2(0, 0), v2(1, 0)}, {v2(0.3, 0.2), v2(-0.5, 0.9)}};
        const double r = 0.25;
        const auto rep = check_UJS(m.kernel, p2, {r});
        CHECK(rep.pass);
        // over the ball |z - y| ranges in [|x-y| - r, |x-y| + r]
        const double dmin = 1.0 - r;
        const double dmax = 1.0 + r;
        const double bound = (1.5 / 0.5) * (std::pow(dmax, 2) * m.kernel.scale()(dmax)) /
                             (std::pow(dmin, 2) * m.kernel.scale()(dmin));
        CHECK(rep.average_ratio <= bound);
    }
    SUBCASE("kernel vanishing near the source is flagged with a large constant") {
        // w(u) is tiny except very close to u = 0, so J(0, y) is large but its ball average small
        const auto w = [](double u) { return 1e-6 + std::exp(-u * u / 1e-6); };
        const auto j = JumpKernel::custom(1, [w](const Vec& a, const Vec& b) {
            const double rho = std::abs(a(0) - b(0));
            return w(a(0)) * w(b(0)) / (rho * rho);
        }, ScaleFunction::power(1.0), 0.0, 4.0, false, false, "spike");
        const auto rep = check_UJS(j, {{v1(0.0), v1(1.0)}}, {0.25});
        CHECK(rep.average_ratio > 100.0);
    }
}

TEST_CASE("shipped models validate and round-trip through records") {
    for (const auto& name : model_names()) {
        CAPTURE(name);
        const auto m = make_model(name);
        const auto v = validate_model(m, 64);
        for (const auto& f : v.failures) MESSAGE(f);
        CHECK(v.pass);
        CHECK(v.symmetry <= 1e-12);
        const auto text = m.to_record().to_text();
        const auto back = Model::from_record(Record::parse(text));
        CHECK(back.to_record().to_text() == text);
        const Vec x = Vec::Constant(m.d, 0.25);
        const Vec y = Vec::Constant(m.d, -0.6);
        CHECK(back.kernel(x, y) == m.kernel(x, y));
        CHECK((back.diffusion(x) - m.diffusion(x)).norm() == 0.0);
    }
}

TEST_CASE("validation catches wrong declarations") {
    SUBCASE("kappa_up too small") {
        auto rec = make_model("reference").to_record();
        rec.set("kernel.kappa_up", 0.5);
        const auto m = Model::from_record(rec);
        CHECK_FALSE(validate_model(m, 16).pass);
    }
    SUBCASE("dimension mismatch in record") {
        auto rec = make_model("reference").to_record();
        rec.set("model.dimension", "2");
        CHECK_THROWS_AS(Model::from_record(rec), RecordError);
    }
    SUBCASE("unknown kernel kind") {
        auto rec = make_model("reference").to_record();
        rec.set("kernel.kind", "levy");
        CHECK_THROWS_AS(Model::from_record(rec), RecordError);
    }
    SUBCASE("unknown model") { CHECK_THROWS_AS(make_model("nope"), ConfigError); }
}
