#include "jdlab/oracle.hpp"

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

LatticeGenerator line(const Model& m, double h, double lo, double hi) {
    LatticeOptions opt;
    opt.h = h;
    opt.box_lo = v1(lo);
    opt.box_hi = v1(hi);
    return LatticeGenerator::build(m, opt);
}

LatticeGenerator square(const Model& m, double h, double half) {
    LatticeOptions opt;
    opt.h = h;
    opt.box_lo = v2(-half, -half);
    opt.box_hi = v2(half, half);
    return LatticeGenerator::build(m, opt);
}

double gauss(double t, double x) { return std::exp(-x * x / (2.0 * t)) / std::sqrt(2.0 * std::numbers::pi * t); }

// Dirichlet heat kernel of 1/2 u'' on (-L/2, L/2) from the eigenfunction series.
double dirichlet_series(double len, double t, double x, double y) {
    double s = 0.0;
    for (int n = 1; n < 400; ++n) {
        const double k = n * std::numbers::pi / len;
        s += (2.0 / len) * std::sin(k * (x + len / 2)) * std::sin(k * (y + len / 2)) * std::exp(-0.5 * k * k * t);
    }
    return s;
}

double dirichlet_survival(double len, double t) {
    double s = 0.0;
    for (int n = 1; n < 400; n += 2) {
        const double k = n * std::numbers::pi / len;
        s += (2.0 / len) * std::sin(k * len / 2) * (2.0 / k) * std::exp(-0.5 * k * k * t);
    }
    return s;
}

double max_gauss_error(double h, double t) {
    const auto g = line(make_model("brownian"), h, -4.0, 4.0);
    const auto hv = evolve(g, g.nearest(v1(0.0)), t);
    double e = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) e = std::max(e, std::abs(hv.values[i] - gauss(t, g.coord(i)(0))));
    return e;
}

}  // namespace

TEST_CASE("Brownian lattice kernel converges to the Gaussian at second order") {
    const double e1 = max_gauss_error(0.1, 0.25);
    const double e2 = max_gauss_error(0.05, 0.25);
    CHECK(e2 < 2e-3);
    CHECK(std::log2(e1 / e2) >= 1.8);
}

TEST_CASE("killed kernel on an interval matches the eigenfunction series") {
    const auto g = line(make_model("brownian"), 0.005, -1.5, 1.5);
    const std::size_t x0 = g.nearest(v1(0.0));
    const auto hv = killed_kernel(g, v1(0.0), 1.0, x0, 0.1);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = g.coord(i)(0);
        const double ref = std::abs(y) < 1.0 ? dirichlet_series(2.0, 0.1, 0.0, y) : 0.0;
        worst = std::max(worst, std::abs(hv.values[i] - ref));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("leak accounting matches the exit probability") {
    // nodes at -1..1, absorbing one step further out: interval of length 2 + 2h
    const double h = 0.01;
    const auto g = line(make_model("brownian"), h, -1.0, 1.0);
    const auto hv = evolve(g, g.nearest(v1(0.0)), 0.5);
    const double mass = hv.mass(g.cell_volume());
    CHECK(std::abs(mass + hv.leaked + hv.truncation - 1.0) < 1e-10);
    CHECK(mass == doctest::Approx(dirichlet_survival(2.0 + 2.0 * h, 0.5)).epsilon(1e-3));
}

TEST_CASE("jump-diffusion lattice: symmetry, conservation, Chapman-Kolmogorov") {
    const auto g = line(make_model("reference"), 0.05, -4.0, 4.0);
    CHECK(g.asymmetry() == 0.0);
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < g.size(); ++j)
            if (i != j) REQUIRE(g.rate(i, j) == g.rate(j, i));
    const std::size_t x0 = g.nearest(v1(0.3));
    for (double t : {0.05, 0.5, 2.0}) {
        const auto hv = evolve(g, x0, t);
        CHECK(std::abs(hv.mass(g.cell_volume()) + hv.leaked + hv.truncation - 1.0) < 1e-8);
        for (double v : hv.values) REQUIRE(v >= 0.0);
    }
    CHECK(chapman_kolmogorov_check(g, x0, 0.2, 0.3) < 1e-6);
}

TEST_CASE("off-cell jump rates reproduce the jump intensity beyond the folded cell") {
    SUBCASE("d = 1, radial") {
        const Model m = make_model("reference");
        const auto g = line(m, 0.05, -4.0, 4.0);
        const std::size_t i = g.nearest(v1(0.0));
        double total = g.leak_rate(i);
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (j == i) continue;
            double dif = 0.0, jmp = 0.0;
            g.rate_parts(i, j, dif, jmp);
            total += jmp;
        }
        const double lambda = jump_intensity_tail(m.kernel, v1(0.0), g.eps_cell());
        CHECK(total == doctest::Approx(lambda).epsilon(0.02));
    }
    SUBCASE("d = 2, position dependent") {
        const Model m = make_model("modulated2d");
        const auto g = square(m, 0.2, 2.0);
        const std::size_t i = g.nearest(v2(0.0, 0.0));
        double total = g.leak_rate(i);
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (j == i) continue;
            double dif = 0.0, jmp = 0.0;
            g.rate_parts(i, j, dif, jmp);
            total += jmp;
        }
        const double lambda = jump_intensity_tail(m.kernel, v2(0.0, 0.0), g.eps_cell());
        CHECK(total == doctest::Approx(lambda).epsilon(0.05));
    }
}

TEST_CASE("restriction moves removed rates into the leak") {
    const auto g = line(make_model("reference"), 0.1, -3.0, 3.0);
    const auto sub = g.restrict_to_ball(v1(0.0), 1.0);
    const auto& parent = sub.parent_index();
    REQUIRE(!parent.empty());
    for (std::size_t a = 0; a < sub.size(); ++a) {
        const std::size_t i = parent[a];
        CHECK(sub.out_rate(a) == g.out_rate(i));
        double kept = 0.0;
        for (std::size_t b = 0; b < sub.size(); ++b)
            if (b != a) kept += sub.rate(a, b);
        CHECK(kept + sub.leak_rate(a) == doctest::Approx(g.out_rate(i)).epsilon(1e-12));
    }
}

TEST_CASE("discrete forms") {
    const std::vector<std::function<double(const Vec&)>> tests = {
        [](const Vec& x) { return std::exp(-x.squaredNorm()); },
        [](const Vec& x) { return std::sin(x(0)) * std::exp(-0.5 * x.squaredNorm()); },
        [](const Vec& x) { return x(0) * std::exp(-x.squaredNorm()); },
    };
    SUBCASE("identity diffusion: diffusion form equals half the gradient energy") {
        const auto r1 = form_comparability_check(line(make_model("brownian"), 0.05, -4, 4), tests);
        CHECK(r1.diffusion_ratio_low == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r1.diffusion_ratio_high == doctest::Approx(1.0).epsilon(1e-12));
        const auto r2 = form_comparability_check(square(make_model("brownian2d"), 0.1, 3.0), tests);
        CHECK(r2.diffusion_ratio_low == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r2.diffusion_ratio_high == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("rotation field stays within the ellipticity window") {
        Model m{"rotation", 2, DiffusionField::rotation_field(0.7, 1.3, 1.0), JumpKernel::none(2)};
        const auto r = form_comparability_check(square(m, 0.1, 3.0), tests);
        CHECK(r.used == 3);
        CHECK(r.diffusion_ratio_low >= 0.7 * 0.95);
        CHECK(r.diffusion_ratio_high <= 1.3 * 1.05);
        CHECK(r.ratio_low > 0.0);
    }
}

TEST_CASE("property: weighted Poincare ratios never exceed the discrete optimum") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    for (double beta : {0.5, 1.0, 1.7}) {
        const double best = weighted_poincare_optimal(1.0, beta, 40);
        CHECK(std::isfinite(best));
        CHECK(best > 0.0);
        std::vector<std::function<double(const Vec&)>> tests;
        for (int k = 0; k < 20; ++k) {
            const double a = coef(gen), b = coef(gen), c = coef(gen), f = 1.0 + 4.0 * std::abs(coef(gen));
            tests.push_back([=](const Vec& x) { return a * x(0) + b * x(0) * x(0) + c * std::sin(f * x(0)); });
        }
        tests.push_back([](const Vec&) { return 3.0; });
        const auto r = weighted_poincare_check(v1(0.0), 1.0, beta, tests, 40);
        CHECK(r.used == 20);
        CHECK(r.realized <= best * (1.0 + 1e-9));
        // scale invariance of the ratio
        const auto r2 = weighted_poincare_check(v1(0.0), 2.0, beta,
                                                {[&](const Vec& x) { return tests[0](x / 2.0); }}, 40);
        CHECK(r2.realized == doctest::Approx(r.per_function[0]).epsilon(1e-9));
    }
}

TEST_CASE("evolve_many agrees with separate runs and reports bad input") {
    const auto g = line(make_model("reference"), 0.1, -3.0, 3.0);
    const std::size_t x0 = g.nearest(v1(0.0));
    const auto many = evolve_many(g, x0, {0.1, 0.4});
    const auto one = evolve(g, x0, 0.4);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(many[1].values[i] == doctest::Approx(one.values[i]).epsilon(1e-12));
    CHECK_THROWS_AS(evolve(g, x0, -1.0), DomainError);
    LatticeOptions tight;
    tight.h = 0.001;
    tight.box_lo = v1(-1);
    tight.box_hi = v1(1);
    const auto fine = LatticeGenerator::build(make_model("brownian"), tight);
    EvolveOptions capped;
    capped.max_steps = 1e4;
    CHECK_THROWS_AS(evolve(fine, fine.nearest(v1(0.0)), 1.0, capped), ConfigError);
}
