#include "jdlab/estimators.hpp"
#include "jdlab/quadrature.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace jdlab;

namespace {

Vec point(double a) {
    Vec v(1);
    v << a;
    return v;
}

double gauss(double t, double R) { return std::exp(-R * R / (2.0 * t)) / std::sqrt(2.0 * std::numbers::pi * t); }

// Brownian motion (generator Delta / 2) killed on leaving (-a, a).
double dirichlet_kernel(double t, double x, double y, double a) {
    double s = 0.0;
    for (int n = 1; n < 400; ++n) {
        const double k = n * std::numbers::pi / (2.0 * a);
        s += std::sin(k * (x + a)) * std::sin(k * (y + a)) * std::exp(-0.5 * k * k * t) / a;
    }
    return s;
}

// (1/r^2) int_0^{r^2} P_0(tau_(-r, r) > s) ds
double dirichlet_occupation(double r) {
    double s = 0.0;
    for (int n = 1; n < 2001; n += 2) {
        const double k = 0.5 * (n * std::numbers::pi / (2.0 * r)) * (n * std::numbers::pi / (2.0 * r));
        const double sign = ((n - 1) / 2) % 2 == 0 ? 1.0 : -1.0;
        s += sign * 4.0 / (n * std::numbers::pi) * (1.0 - std::exp(-k * r * r)) / k;
    }
    return s / (r * r);
}

}  // namespace

TEST_CASE("sandwich: closed-form Gaussian data give ratio 1 at the Brownian rate") {
    std::vector<DensitySample> data;
    for (double t : {0.05, 0.2, 1.0})
        for (double R = 0.0; R < 3.0; R += 0.07) data.push_back({t, 0.0, R, gauss(t, R)});
    const auto fit = fit_sandwich(data, nullptr, 1);
    REQUIRE(fit.feasible);
    CHECK(fit.pass);
    CHECK(fit.ratio == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.constants.c2 == 0.5);
    CHECK(fit.constants.c4 == 0.5);
    CHECK(fit.constants.c1 == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));
    for (double s : fit.slack_low) CHECK(s >= -1e-12);
    for (double s : fit.slack_high) CHECK(s >= -1e-12);
}

TEST_CASE("sandwich: single point is trivially feasible") {
    const auto phi = ScaleFunction::power(1.0);
    const auto fit = fit_sandwich({{0.3, 0.0, 0.4, 0.2}}, &phi, 1);
    CHECK(fit.feasible);
    CHECK(fit.ratio == doctest::Approx(1.0));
    CHECK_THROWS_AS(fit_sandwich({{0.3, 0.0, 0.4, 0.0}}, &phi, 1), DomainError);
    CHECK(!fit_sandwich({}, &phi, 1).feasible);
}

TEST_CASE("sandwich: Brownian oracle ratio tends to 1 under refinement") {
    const Model m = make_model("brownian");
    double previous = 1e300;
    for (double h : {0.1, 0.05, 0.025}) {
        LatticeOptions opt;
        opt.h = h;
        opt.box_lo = point(-5.0);
        opt.box_hi = point(5.0);
        const auto g = LatticeGenerator::build(m, opt);
        const auto heats = evolve_many(g, g.nearest(point(0.0)), {0.2, 1.0});
        std::vector<DensitySample> data;
        // interior window away from the absorbing ends
        for (const auto& s : density_samples(g, heats, 1e-4))
            if (s.R < 2.0) data.push_back(s);
        const auto fit = fit_sandwich(data, nullptr, 1);
        REQUIRE(fit.feasible);
        CHECK(fit.ratio < previous);
        previous = fit.ratio;
    }
    CHECK(previous < 1.01);
}

TEST_CASE("property: sandwich constants are monotone in the data and witnesses reproduce them") {
    const auto phi = ScaleFunction::power(1.0);
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> ut(0.01, 2.0), ur(0.0, 4.0), noise(0.5, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<DensitySample> data;
        for (int i = 0; i < 40; ++i) {
            const double t = ut(gen), R = ur(gen);
            data.push_back({t, 0.0, R, noise(gen) * envelope_shape(t, R, phi, 1, 0.5)});
        }
        const auto small = fit_sandwich(std::vector<DensitySample>(data.begin(), data.begin() + 20), &phi, 1);
        const auto full = fit_sandwich(data, &phi, 1);
        REQUIRE(small.feasible);
        REQUIRE(full.feasible);
        CHECK(full.ratio >= small.ratio * (1.0 - 1e-12));
        for (std::size_t k = 0; k < full.rates.size(); ++k) {
            CHECK(full.c3_by_rate[k] >= small.c3_by_rate[k]);
            CHECK(full.c1_by_rate[k] <= small.c1_by_rate[k]);
        }
        auto again = data;
        again.push_back(full.upper_witness);
        again.push_back(full.lower_witness);
        const auto refit = fit_sandwich(again, &phi, 1);
        CHECK(refit.constants.c1 == full.constants.c1);
        CHECK(refit.constants.c3 == full.constants.c3);
    }
}

TEST_CASE("log-log fit") {
    const std::vector<double> r{0.25, 0.5, 1.0};
    const auto f = loglog_fit(r, {0.0625, 0.25, 1.0}, {0.001, 0.004, 0.016});
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.residual < 1e-12);
    CHECK_THROWS_AS(loglog_fit({0.5}, {0.25}, {0.01}), DomainError);
}

TEST_CASE("exit scaling for Brownian motion: E tau = r^2 at each radius") {
    SimConfig cfg;
    cfg.seed = 77;
    cfg.threads = 4;
    cfg.bridge = true;
    const auto rep = exit_scaling(make_model("brownian"), point(0.0), {0.25, 0.5, 1.0}, cfg, 5000, 1e-3);
    for (const auto& e : rep.radii) CHECK(std::abs(e.mean - e.radius * e.radius) < 3.0 * e.se);
    CHECK(std::abs(rep.fit.slope - 2.0) < 0.15);
    CHECK_THROWS_AS(exit_scaling(make_model("brownian"), point(0.0), {0.5}, cfg, 10), DomainError);
    CHECK_THROWS_AS(exit_scaling(make_model("brownian"), point(0.0), {0.3, 0.4, 0.5}, cfg, 10), DomainError);
}

TEST_CASE("near-diagonal minima for Brownian motion match the interval series") {
    OracleGrid grid;
    grid.h_per_scale = 40;
    grid.threads = 4;
    const auto rep = near_diagonal_check(make_model("brownian"), 0.0, {0.01, 0.04, 0.16}, grid);
    CHECK(rep.pass);
    // scale invariance: min over |x|, |y| <= a/2 of p^(-a,a)(a^2, x, y) a, attained at opposite ends
    const double series = dirichlet_kernel(1.0, -0.5, 0.5, 1.0);
    for (std::size_t k = 0; k < rep.times.size(); ++k) {
        CHECK(rep.minima[k] == doctest::Approx(series).epsilon(0.02));
        CHECK(std::abs(rep.witness_x[k] + rep.witness_y[k]) < 1e-9);
        CHECK(std::abs(rep.witness_x[k]) <= 0.5 * std::sqrt(rep.times[k]) + 1e-12);
    }
    CHECK(rep.spread < 1.02);
}

TEST_CASE("space-time hitting: occupation integral against the Dirichlet series") {
    OracleGrid grid;
    grid.h_per_scale = 40;
    const double r = 0.5;
    const auto rep = spacetime_hitting_check(make_model("brownian"), 0.0, r,
                                             {{0.0, r * r, 0.0, r},               // full cylinder
                                              {0.45 * r * r, 0.55 * r * r, 0.0, 0.05 * r},  // 1% slab
                                              {0.1, 0.1, 0.0, 0.1}},              // null set
                                             grid);
    CHECK(rep.occupation[0] == doctest::Approx(dirichlet_occupation(r)).epsilon(0.01));
    CHECK(rep.skipped[2]);
    CHECK(rep.ratio[1] / rep.ratio[0] < 4.0);
    CHECK(rep.ratio[0] / rep.ratio[1] < 4.0);
    CHECK(rep.constant > 0.0);
    CHECK_THROWS_AS(spacetime_hitting_check(make_model("brownian"), 0.0, r, {{0.0, 0.1, 0.4, 0.2}}, grid),
                    DomainError);
}

TEST_CASE("Harnack ratios for Brownian motion against the Gaussian kernel") {
    OracleGrid grid;
    grid.h_per_scale = 25;
    grid.threads = 4;
    const double delta = 0.1;
    const auto rep = harnack_ratio(make_model("brownian"), 0.0, {0.125, 0.25, 0.5}, delta, grid);
    CHECK(rep.pass);
    CHECK(rep.spread < 1.05);
    for (const auto& s : rep.scales) {
        CHECK(s.ratio > 0.0);
        // same windows and nodes with the free-space Gaussian kernel
        const double h = s.R / 25.0;
        double sup = 0.0, inf = 1e300;
        for (int k = 0; k < 6; ++k) {
            const double tm = delta * s.R * s.R * (1.0 + (k + 0.5) / 6);
            const double tp = delta * s.R * s.R * (3.0 + (k + 0.5) / 6);
            for (double y = -std::floor(s.R / h) * h; y < s.R - 1e-12; y += h) {
                if (std::abs(y) >= s.R) continue;
                sup = std::max(sup, gauss(tm, y));
                inf = std::min(inf, gauss(tp, y));
            }
        }
        const double expected = sup / inf;
        CHECK(s.ratio == doctest::Approx(expected).epsilon(0.03));
    }
}

TEST_CASE("Hoelder exponent of the Gaussian kernel is 1") {
    OracleGrid grid;
    grid.threads = 4;
    for (double R : {0.25, 0.5}) {
        const auto rep = holder_modulus(make_model("brownian"), 0.0, R, grid);
        REQUIRE(rep.resolved);
        CHECK(rep.kappa > 0.85);
        CHECK(rep.kappa < 1.15);
        CHECK(rep.lo > 0.0);
    }
}

TEST_CASE("tightness: skipped without jumps, positive for the mixed model") {
    SimConfig cfg;
    cfg.seed = 3;
    cfg.threads = 4;
    const auto none = tightness_check(make_model("brownian"), 0.0, {0.1}, {1.5}, cfg);
    CHECK(none.skipped);
    CHECK(!none.reason.empty());

    const Model m = make_model("mixture");
    const auto rep = tightness_check(m, 0.0, {0.1}, {2.0, 4.0}, cfg, 2.0, 400.0);
    CHECK(rep.pass);
    CHECK(rep.constant > 0.0);
    // first-order prediction of the ratio at doubled displacement: t int_ball J
    const double t = 0.1, rt = m.kernel.scale().tilde_inverse(t);
    const auto ball_rate = [&](double D) {
        return quad::integrate_gl([&](double z) { return m.kernel(point(0.0), point(z)); }, D - 2.0 * rt,
                                  D + 2.0 * rt, 64);
    };
    const double d1 = rep.points[0].displacement, d2 = rep.points[1].displacement;
    const double expected = ball_rate(d2) / ball_rate(d1);
    const auto& a = rep.points[0].hits;
    const auto& b = rep.points[1].hits;
    const double observed = b.p / a.p;
    const double sd = observed * std::sqrt((a.se / a.p) * (a.se / a.p) + (b.se / b.p) * (b.se / b.p));
    CHECK(std::abs(observed - expected) < 4.0 * sd + 0.15 * expected);
    CHECK_THROWS_AS(tightness_check(m, 0.0, {0.1}, {0.5}, cfg), DomainError);
}

TEST_CASE("Davies fit on Gaussian data recovers the Gaussian amplitude and dominates held-out points") {
    std::vector<DensitySample> fit, hold;
    for (double t : {0.05, 0.2, 1.0})
        for (double R = 0.05; R < 3.0; R += 0.1) fit.push_back({t, 0.0, R, gauss(t, R)});
    for (double t : {0.1, 0.5})
        for (double R = 0.05; R < 3.0; R += 0.13) hold.push_back({t, 0.0, R, gauss(t, R)});
    const auto rep = fit_davies(fit, hold, 0.5, 0.0, 1, {0.25, 0.5, 1.0});
    CHECK(rep.c2 == 0.5);
    CHECK(rep.c1 == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(0.01));
    CHECK(rep.pass);
}

TEST_CASE("density agreement: oracle Gaussian against exact normal samples") {
    const Model m = make_model("brownian");
    LatticeOptions opt;
    opt.h = 0.02;
    opt.box_lo = point(-5.0);
    opt.box_hi = point(5.0);
    const auto g = LatticeGenerator::build(m, opt);
    const auto hv = evolve(g, g.nearest(point(0.0)), 1.0);
    Engine rng = substream(9, 0);
    const std::size_t n = 100000;
    std::vector<double> xs(n), shifted(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = standard_normal(rng);
        shifted[i] = xs[i] + 0.1;
    }
    const auto ok = density_agreement(g, hv, xs, n, 5);
    CHECK(ok.bins > 20);
    CHECK(ok.fraction >= 0.95);
    const auto bad = density_agreement(g, hv, shifted, n, 5);
    CHECK(bad.fraction < 0.7);
}
