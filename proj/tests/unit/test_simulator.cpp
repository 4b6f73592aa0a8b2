#include "jdlab/simulator.hpp"
#include "jdlab/quadrature.hpp"
#include "jdlab/stats.hpp"

#include <doctest.h>

#include <cmath>

using namespace jdlab;

namespace {

Vec point(double a) {
    Vec v(1);
    v << a;
    return v;
}

Vec point(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST_CASE("Brownian motion: mean and variance at t = 1") {
    const Model m = make_model("brownian");
    SimConfig cfg;
    cfg.dt = 0.01;
    cfg.seed = 5;
    cfg.threads = 4;
    const std::size_t n = 20000;
    const auto ens = simulate_paths(m, point(0.3), 1.0, {0.5, 1.0}, cfg, n);
    std::vector<double> xs;
    for (const auto& x : ens.positions_at(1)) xs.push_back(x(0));
    const auto ci = stats::mean_ci(xs);
    CHECK(std::abs(ci.mean - 0.3) < 4.0 * ci.se);
    // sample variance of a normal has relative sd sqrt(2/n) ~ 1%
    CHECK(std::abs(ci.variance - 1.0) < 0.05);
    CHECK(ens.alive_fraction() == 1.0);
}

TEST_CASE("replay and thread invariance") {
    const Model m = make_model("reference");
    SimConfig cfg;
    cfg.seed = 99;
    cfg.threads = 1;
    const auto a = simulate_paths(m, point(0.0), 0.2, {0.1, 0.2}, cfg, 300);
    const auto b = simulate_paths(m, point(0.0), 0.2, {0.1, 0.2}, cfg, 300);
    cfg.threads = 6;
    const auto c = simulate_paths(m, point(0.0), 0.2, {0.1, 0.2}, cfg, 300);
    cfg.seed = 100;
    const auto e = simulate_paths(m, point(0.0), 0.2, {0.1, 0.2}, cfg, 300);
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.fingerprint() == c.fingerprint());
    CHECK(a.fingerprint() != e.fingerprint());
    CHECK(a.to_csv() == c.to_csv());
}

TEST_CASE("radial proposal law for phi(r) = r matches the Pareto law") {
    const auto phi = ScaleFunction::power(1.0);
    const double eps = 0.05;
    const RadialSampler s(phi, eps, 100.0);
    // density 1 / rho^2 on (eps, inf): mass 1/eps, CDF 1 - eps/rho
    CHECK(s.mass() == doctest::Approx(1.0 / eps).epsilon(1e-9));
    CHECK(s.slack() < 1e-6);
    for (double r : {0.06, 0.3, 2.0, 50.0, 500.0}) CHECK(s.cdf(r) == doctest::Approx(1.0 - eps / r).epsilon(1e-9));
    Engine rng = substream(3, 0);
    std::vector<double> xs(20000);
    for (auto& x : xs) x = s.sample(rng);
    const double ks = stats::ks_statistic(xs, [&](double r) { return 1.0 - eps / r; });
    CHECK(stats::kolmogorov_sf(ks * std::sqrt(static_cast<double>(xs.size()))) > 1e-3);
}

TEST_CASE("curved scale function: slack bounds the interpolation error") {
    const auto phi = mixed_stable_phi(MixtureMeasure::atoms({{0.5, 0.5}, {1.5, 0.5}}));
    const RadialSampler s(phi, 0.01, 1e3);
    // phi^ <= (1 + slack) phi at off-node radii, so the proposal dominates
    for (double r = 0.011; r < 2e3; r *= 1.37) CHECK(s.inv_phi_hat(r) * phi(r) * (1.0 + s.slack()) >= 1.0 - 1e-12);
    // mass against direct quadrature of 1 / (rho phi(rho))
    const double direct = quad::integrate_log_panels([&](double r) { return 1.0 / (r * phi(r)); }, 0.01, 1e3, 16);
    CHECK(s.mass() >= direct * (1.0 - 1e-3));
}

TEST_CASE("truncated big jumps: chi-square against 1/z^2 on eps < |z| <= cap") {
    const auto kern = JumpKernel::stable_like(1, ScaleFunction::power(1.0), 1.0);
    const double eps = 0.1, cap = 2.0;
    const RadialSampler sampler(kern.scale(), eps, cap);
    Engine rng = substream(17, 0);
    const int bins = 10;
    std::vector<double> counts(bins, 0.0);
    const std::size_t n = 40000;
    std::size_t negative = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec z = sample_big_jump(kern, point(0.4), eps, cap, rng, &sampler);
        const double r = std::abs(z(0));
        REQUIRE(r > eps);
        REQUIRE(r <= cap);
        negative += z(0) < 0.0 ? 1 : 0;
        // equal-probability bins of the law with CDF (1/eps - 1/r) / (1/eps - 1/cap)
        const double u = (1.0 / eps - 1.0 / r) / (1.0 / eps - 1.0 / cap);
        counts[std::min(bins - 1, static_cast<int>(u * bins))] += 1.0;
    }
    double chi = 0.0;
    const double expect = static_cast<double>(n) / bins;
    for (double c : counts) chi += (c - expect) * (c - expect) / expect;
    CHECK(stats::chi_square_sf(chi, bins - 1) > 1e-3);
    const auto sign = stats::proportion_ci(negative, n, 4.0);
    CHECK(sign.lo < 0.5);
    CHECK(sign.hi > 0.5);
}

TEST_CASE("thinning: accepted jump count follows kappa_low / kappa_up") {
    const auto phi = ScaleFunction::power(1.0);
    // true kernel 0.5 / z^2 behind a declared majorant of 1 / z^2
    const auto half = JumpKernel::custom(
        1, [](const Vec& x, const Vec& y) { return 0.5 / (x - y).squaredNorm(); }, phi, 0.5, 1.0, true, true, "half");
    Model m = make_model("brownian");
    m.kernel = half;
    SimConfig cfg;
    cfg.eps = 0.05;
    cfg.seed = 2;
    cfg.r_max = 1e6;
    cfg.threads = 4;
    const double t = 0.5;
    const std::size_t n = 4000;
    const auto ens = simulate_paths(m, point(0.0), t, {t}, cfg, n);
    std::vector<double> counts;
    for (const auto& p : ens.paths) counts.push_back(static_cast<double>(p.jumps));
    const auto ci = stats::mean_ci(counts);
    // Lambda_eps t = 0.5 * 2 / eps * t = 10
    const double expected = 0.5 * 2.0 / cfg.eps * t * (1.0 - cfg.eps / cfg.r_max);
    CHECK(std::abs(ci.mean - expected) < 4.0 * ci.se);
    CHECK(ci.variance == doctest::Approx(expected).epsilon(0.1));
}

TEST_CASE("exit times of Brownian motion: E tau = r^2 / d") {
    SimConfig cfg;
    cfg.seed = 8;
    cfg.threads = 4;
    cfg.bridge = true;
    SUBCASE("d = 1") {
        const auto res = exit_statistics(make_model("brownian"), point(0.0), {0.5, 1.0}, cfg, 6000, 0.1, 20.0, 1e-3);
        for (const auto& e : res) {
            CHECK(e.usable);
            CHECK(std::abs(e.mean - e.radius * e.radius) < 4.0 * e.se);
            // all exits land on the sphere for a continuous path with the bridge correction
            CHECK(e.histogram[0] > 0.99);
        }
    }
    SUBCASE("d = 2") {
        const auto res = exit_statistics(make_model("brownian2d"), point(0.0, 0.0), {0.5}, cfg, 6000, 0.1, 20.0, 1e-3);
        CHECK(std::abs(res[0].mean - 0.125) < 4.0 * res[0].se);
    }
}

TEST_CASE("hitting far away has probability zero without jumps, positive with them") {
    SimConfig cfg;
    cfg.seed = 4;
    cfg.threads = 4;
    cfg.dt = 1e-4;
    const auto bm = hitting_tail(make_model("brownian"), point(0.0), 0.1, {0.5, 1.0}, cfg, 2000);
    for (const auto& h : bm) {
        CHECK(h.exits > 1990);
        CHECK(h.hits == 0);
    }
    cfg.dt = 1e-5;
    cfg.eps = 0.02;
    const auto st = hitting_tail(make_model("reference"), point(0.0), 0.1, {0.5}, cfg, 4000);
    CHECK(st[0].hits > 0);
    CHECK(st[0].p < 0.5);
}

TEST_CASE("Levy system identity for jumps longer than 0.5 before leaving B(0, 1)") {
    const Model m = make_model("stable");
    SimConfig cfg;
    cfg.seed = 21;
    cfg.threads = 4;
    cfg.dt = 2e-3;
    const auto f = [](const Vec& x, const Vec& y) { return (y - x).norm() > 0.5 ? 1.0 : 0.0; };
    const auto rep = levy_system_check(m, point(0.0), Ball{point(0.0), 1.0}, f, cfg, 1500, 1.0);
    CHECK(rep.lhs > 0.0);
    CHECK(rep.z < 4.0);
    CHECK(rep.discrepancy < 0.1);
}

TEST_CASE("truncation and killing are reported as losses") {
    const Model m = make_model("stable");
    SimConfig cfg;
    cfg.seed = 12;
    cfg.threads = 4;
    cfg.r_max = 1.0;
    const double t = 0.2;
    const std::size_t n = 5000;
    const auto ens = simulate_paths(m, point(0.0), t, {t}, cfg, n);
    // P(no jump beyond 1 by t) = exp(-Lambda_1 t), Lambda_1 = 2
    const double expected = 1.0 - std::exp(-2.0 * t);
    const auto k = static_cast<std::size_t>(std::lround(ens.truncated_fraction() * n));
    const auto pr = stats::proportion_ci(k, n, 4.0);
    CHECK(pr.lo < expected);
    CHECK(pr.hi > expected);
    CHECK(ens.positions_at(0).size() == n - k);

    cfg.r_max = 0.0;
    cfg.kill = Ball{point(0.0), 0.5};
    const auto killed = simulate_paths(m, point(0.0), t, {t}, cfg, 2000);
    CHECK(killed.killed_fraction() > 0.0);
    for (const auto& p : killed.paths)
        if (p.killed) CHECK(std::abs(p.positions[0](0)) >= 0.5);
}

TEST_CASE("configuration and model errors") {
    const Model m = make_model("reference");
    SimConfig cfg;
    cfg.eps = 0.001;  // dt * 2/eps = 2 > budget
    CHECK_THROWS_AS(simulate_paths(m, point(0.0), 0.1, {}, cfg, 10), ConfigError);
    cfg = {};
    CHECK_THROWS_AS(simulate_paths(m, point(0.0, 0.0), 0.1, {}, cfg, 10), ConfigError);
    CHECK_THROWS_AS(simulate_paths(m, point(0.0), 0.1, {0.2}, cfg, 10), ConfigError);

    // evaluator three times above its declared majorant
    Model bad = make_model("brownian");
    bad.kernel = JumpKernel::custom(
        1, [](const Vec& x, const Vec& y) { return 3.0 / (x - y).squaredNorm(); }, ScaleFunction::power(1.0), 1.0,
        1.0, true, true, "bad");
    CHECK_THROWS_AS(simulate_paths(bad, point(0.0), 0.5, {}, cfg, 50), ModelError);
    CHECK(majorant_rate(make_model("reference").kernel, 0.05) == doctest::Approx(40.0).epsilon(1e-6));
}
