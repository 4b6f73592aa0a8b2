#pragma once

#include "jdlab/types.hpp"

#include <functional>
#include <vector>

namespace jdlab::quad {

struct Rule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;  // sum to 2
};

/// Gauss-Legendre rule with n points (cached per n).
const Rule& gauss_legendre(int n);

/// Fixed n-point Gauss-Legendre on [a, b].
double integrate_gl(const std::function<double(double)>& f, double a, double b, int n = 16);

/// Gauss-Legendre panels on [a, b] uniform in log(x); requires 0 < a < b.
double integrate_log_panels(const std::function<double(double)>& f, double a, double b,
                            int panels_per_decade = 8, int order = 16);

struct SimpsonResult {
    double value = 0.0;
    double error_estimate = 0.0;
    bool converged = true;
};

/// Adaptive Simpson with absolute tolerance; reports non-convergence rather than throwing.
SimpsonResult adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double abs_tol, int max_depth = 48);

/// Surface area of the unit sphere S^{d-1} (2, 2*pi, 4*pi for d = 1, 2, 3).
double sphere_area(int d);

/// Volume of the unit ball in R^d.
double ball_volume(int d);

/// Quadrature over unit directions: weights sum to sphere_area(d).
struct DirectionRule {
    std::vector<Vec> directions;
    std::vector<double> weights;
};

/// d = 1: {-1, +1}; d = 2: `resolution` equispaced angles; d = 3: product
/// Gauss-Legendre in cos(theta) times `resolution` azimuths.
DirectionRule direction_rule(int d, int resolution = 32);

/// Quadrature points for integrating over the ball B(center, radius) in R^d.
struct BallRule {
    std::vector<Vec> points;
    std::vector<double> weights;  // sum to ball volume
};

BallRule ball_rule(const Vec& center, double radius, int radial_order = 12, int angular = 16);

}  // namespace jdlab::quad
