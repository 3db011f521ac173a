#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace framers {

// Row-major throughout: token grids are [rows, dim] with contiguous rows.
template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matd = MatX<double>;
using Matf = MatX<float>;

/// Thrown for malformed inputs (bad shapes, out-of-range values, bad indices).
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Thrown when an on-disk artifact is missing, corrupt, or incompatible.
class ArtifactError : public std::runtime_error {
 public:
  explicit ArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Thrown when training hits a non-finite loss.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& msg, std::int64_t step, double lr,
                double grad_norm)
      : std::runtime_error(msg), step(step), lr(lr), grad_norm(grad_norm) {}
  std::int64_t step;
  double lr;
  double grad_norm;
};

}  // namespace framers
