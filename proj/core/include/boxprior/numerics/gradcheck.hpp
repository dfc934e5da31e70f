#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "boxprior/numerics/matrix.hpp"

namespace boxprior::numerics {

/// One tensor under test: a live reference the loss closure reads, and the
/// analytic gradient to compare against.
struct CheckedTensor {
  std::string name;
  Matrix* value = nullptr;
  const Matrix* analytic = nullptr;
};

struct TensorGradError {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradReport {
  std::vector<TensorGradError> tensors;
  std::size_t coordinates = 0;

  double max_relative_error() const noexcept;
  const TensorGradError* worst() const noexcept;
};

/// Denominator floor in the relative error.
inline constexpr double kGradCheckFloor = 1e-8;

/// |a - n| / max(|a|, |n|, kGradCheckFloor)
double relative_error(double analytic, double numeric) noexcept;

/// Central differences (f(x+h) - f(x-h)) / 2h for every coordinate of every
/// tensor, compared against the analytic gradients. Each tensor is perturbed
/// in place and restored bit-exactly afterwards. Throws EvaluationError if
/// the loss is non-finite and InvalidArgument if step <= 0. The loss may be
/// evaluated in extended precision; with O(1) losses a double evaluation
/// cannot resolve gradients near kGradCheckFloor.
GradReport grad_check(const std::function<long double()>& loss,
                      std::span<const CheckedTensor> tensors, double step);

}  // namespace boxprior::numerics
