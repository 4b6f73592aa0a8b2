#include "jdlab/bounds.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace jdlab;

TEST_CASE("Gaussian and jump profiles") {
    CHECK(p_c(1.0, 0.0, 1) == doctest::Approx(1.0));
    CHECK(p_c(1.0, 0.0, 3) == doctest::Approx(1.0));
    CHECK(p_c(1.0, 1.0, 2) == doctest::Approx(std::exp(-1.0)));
    CHECK(p_c(0.3, 0.2, 1) > p_c(0.3, 0.21, 1));
    CHECK_THROWS_AS(p_c(0.0, 1.0, 1), DomainError);

    const auto phi = ScaleFunction::power(1.0);
    CHECK(p_j(1.0, 1.0, phi, 1) == doctest::Approx(1.0));
    const auto half = ScaleFunction::power(0.5);
    for (double t : {0.01, 0.3, 5.0})
        for (double r : {0.05, 0.7, 3.0})
            CHECK(p_j(t, r, half, 2) ==
                  doctest::Approx(std::min(std::pow(t, -2.0 / 0.5), t / std::pow(r, 2.5))).epsilon(1e-10));
    CHECK(p_j(0.5, 0.0, half, 1) == doctest::Approx(std::pow(0.5, -2.0)));
    CHECK_THROWS_AS(p_j(-1.0, 1.0, phi, 1), DomainError);
}

TEST_CASE("p_j branch continuity at the crossover") {
    const auto phi = mixed_stable_phi(MixtureMeasure::uniform(0.5, 1.5));
    for (int d : {1, 2}) {
        for (double t : {1e-3, 0.1, 1.0, 20.0}) {
            const double r = p_j_crossover(t, phi, d);
            const double a = std::pow(phi.inverse(t), -d);
            const double b = t / (std::pow(r, d) * phi(r));
            CHECK(std::abs(a - b) / a < 1e-8);
        }
    }
}

TEST_CASE("envelope") {
    const auto phi = ScaleFunction::power(1.0);
    EnvelopeConstants k;
    k.c1 = 0.5;
    k.c3 = 2.0;
    SUBCASE("R = 0 reduces to the on-diagonal branch") {
        for (double t : {0.01, 0.5, 4.0}) {
            CHECK(envelope(t, 0.0, phi, 1, k, Side::Upper) ==
                  doctest::Approx(2.0 / std::max(std::sqrt(t), t)).epsilon(1e-12));
            CHECK(envelope(t, 0.0, phi, 1, k, Side::Lower) ==
                  doctest::Approx(0.5 / std::max(std::sqrt(t), t)).epsilon(1e-12));
        }
    }
    SUBCASE("short-time short-distance point is jump dominated") {
        const double t = 0.01, R = 0.5;
        const double jump = t / (R * phi(R));
        CHECK(jump == doctest::Approx(0.04));
        for (double rate : {0.25, 1.0, 4.0}) CHECK(jump > std::pow(t, -0.5) * std::exp(-25.0 * rate));
        CHECK(classify_region(t, R, phi).dominant == Dominant::Jump);
    }
    SUBCASE("upper dominates lower for ordered constants") {
        for (double t : {0.01, 0.2, 3.0})
            for (double R : {0.0, 0.1, 1.0, 5.0})
                CHECK(envelope(t, R, phi, 1, k, Side::Upper) >= envelope(t, R, phi, 1, k, Side::Lower));
    }
    SUBCASE("invalid constants") {
        EnvelopeConstants bad;
        bad.c1 = 3.0;
        CHECK_THROWS_AS(envelope(1.0, 1.0, phi, 1, bad, Side::Upper), ValidationError);
        bad = {};
        bad.c2 = -1.0;
        CHECK_THROWS_AS(envelope(1.0, 1.0, phi, 1, bad, Side::Upper), ValidationError);
    }
}

TEST_CASE("Davies bound") {
    CHECK(davies_truncated_bound(0.5, 1.0, 0.0, 0.3, 1, 0.2, 2.0, 1.0) == doctest::Approx(2.0 / std::sqrt(0.5)));
    CHECK(davies_truncated_bound(0.5, 1.0, 1e-9, 0.3, 1, 0.2, 2.0, 1.0) ==
          doctest::Approx(2.0 / std::sqrt(0.5)).epsilon(1e-8));
    // without small jumps the minimum over s is the Gaussian exp(-R^2/(4 c2 t))
    for (double t : {0.05, 0.4, 2.0}) {
        for (double R : {0.1, 0.5, 2.0}) {
            const double c2 = 0.7;
            const auto m = davies_minimized(t, R, 0.5, 1, 0.0, 1.0, c2);
            const double exact = std::exp(-R * R / (4.0 * c2 * t)) / std::sqrt(t);
            CHECK(m.value >= exact * (1.0 - 1e-12));
            CHECK(std::log(m.value / exact) < 2e-3 * (1.0 + R * R / (4.0 * c2 * t)));
        }
    }
    // small jumps only raise the bound
    CHECK(davies_minimized(0.1, 1.0, 0.5, 1, 0.3, 1.0, 1.0).value >=
          davies_minimized(0.1, 1.0, 0.5, 1, 0.0, 1.0, 1.0).value);
}

TEST_CASE("optimized F: parameter choice and closed-form value") {
    const auto phi = ScaleFunction::power(1.0);
    const int d = 1;
    const double cs = 1.0;
    const double b1 = 1.0;
    const double K = b1 / (72.0 * cs * (d + b1));
    const double H = b1 / (12.0 * (d + b1));
    SUBCASE("first situation with phi_r(R)/t = e") {
        const double R = 50.0;
        const double t = R / std::numbers::e;  // phi(R) / t = e, R^2 >= t
        const auto f = optimized_F(t, R, phi, d, cs);
        REQUIRE(f.situation == Situation::First);
        CHECK(f.s * H * R == doctest::Approx(2.0));
        CHECK(f.lambda == doctest::Approx(H * R));
        const double s = 2.0 / (H * R);
        const double expected = -s * R / 3.0 + cs * (s * s + std::exp(2.0) / (H * R)) * t;
        CHECK(f.log_value == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("tag selection at R^2 = 4 t") {
        const double t = 1.0, R = 2.0;
        const double a = std::numbers::e * K / phi.comp_const();
        REQUIRE(std::exp(4.0 * K) >= a * phi(R) / t);
        CHECK(optimized_F(t, R, phi, d, cs).situation == Situation::First);
    }
    SUBCASE("second situation parameters") {
        const auto phi_r = phi.rescaled(0.01);  // phi_r(R) = phi(0.01 R) / 1e-4
        const double t = 0.05, R = 1.0;
        const auto f = optimized_F(t, R, phi_r, d, cs);
        REQUIRE(f.situation == Situation::Second);
        CHECK(f.s == doctest::Approx(R / (6.0 * cs * t)));
        CHECK(f.lambda == doctest::Approx(K * R / (6.0 * cs)));
        CHECK(f.log_value <= second_situation_log_constant(phi_r, d, cs) + f.log_gaussian_form);
    }
    SUBCASE("neither situation is reported, not patched") {
        // R^2 < t and e^{K R^2 / t} >= a phi_r(R) / t
        const auto f = optimized_F(10.0, 1.0, phi, d, cs);
        CHECK(f.situation == Situation::NotApplicable);
        CHECK(!f.reason.empty());
    }
}

TEST_CASE("property: optimized F obeys both forms with a single constant over random scale functions") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(0.2, 1.8);
    for (int trial = 0; trial < 6; ++trial) {
        double lo = u(gen), hi = u(gen);
        if (lo > hi) std::swap(lo, hi);
        const auto phi = mixed_stable_phi(MixtureMeasure::atoms({{lo, 0.5}, {hi, 0.5}}));
        for (double r : {0.01, 0.3, 1.0, 10.0}) {
            const auto phi_r = phi.rescaled(r);
            const double bound1 = first_situation_log_constant(phi_r, 1);
            const double bound2 = second_situation_log_constant(phi_r, 1);
            double worst1 = -1e300;
            for (int i = 0; i < 32; ++i) {
                for (int j = 0; j < 32; ++j) {
                    const double t = std::pow(10.0, -4.0 + 6.0 * i / 31.0);
                    const double R = std::pow(10.0, -2.0 + 4.0 * j / 31.0);
                    const auto f = optimized_F(t, R, phi_r, 1);
                    if (f.situation == Situation::Second) CHECK(f.log_value <= bound2 + f.log_gaussian_form);
                    if (f.situation == Situation::First) worst1 = std::max(worst1, f.log_value - f.log_polynomial_form);
                }
            }
            CHECK(std::isfinite(worst1));
            CHECK(worst1 <= bound1);
        }
    }
}

TEST_CASE("region partition") {
    const auto phi = ScaleFunction::power(1.0);
    CHECK(classify_region(0.04, 0.5, phi).case_label == 5);
    const auto phi_half = ScaleFunction::power(1.0);
    const double R = phi_half.inverse(0.5);
    CHECK(classify_region(2.0, R, phi_half).case_label == 2);
    // overlap of cases 3 and 4 at t = 1 <= R is resolved towards case 3
    CHECK(region_predicates(1.0, 1.0, phi).size() > 1);
    CHECK(classify_region(1.0, 1.5, phi).case_label == 3);

    for (const auto& p : {ScaleFunction::power(0.5), ScaleFunction::power(1.0), ScaleFunction::power(1.9),
                          mixed_stable_phi(MixtureMeasure::uniform(0.5, 1.5))}) {
        const auto cells = region_sweep(p, 1, 512, 1e-3, 10.0, 2);
        std::size_t jump_small = 0;
        for (const auto& c : cells) {
            const auto hits = region_predicates(c.t, c.R, p);
            REQUIRE(!hits.empty());
            CHECK(c.report.case_label == hits.front());
            if (c.report.dominant == Dominant::Jump && c.t <= c.R * c.R && c.R * c.R <= 1.0) ++jump_small;
        }
        CHECK(jump_small > 0);
    }
}
