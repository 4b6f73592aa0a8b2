#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace jdlab {

// Points and matrices never exceed d = 3; the fixed maximum keeps them on the stack.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 3, 3>;

inline constexpr int kMaxDim = 3;

inline Vec zero_vec(int d) { return Vec::Zero(d); }
inline Mat zero_mat(int d) { return Mat::Zero(d, d); }

/// Argument outside the mathematical domain of an operation (negative radius, t <= 0, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Numerical procedure failed (bracketing, quadrature non-convergence, overflow).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A declared object violates its contract (bad measure, asymmetric matrix, ...).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The model's declared constants contradict its behaviour (e.g. a kernel above its majorant).
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad configuration (records, lattice spacing, simulation budget).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace jdlab
