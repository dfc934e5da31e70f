#include "boxprior/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "boxprior/errors.hpp"

namespace boxprior::numerics {

double GradReport::max_relative_error() const noexcept {
  double worst = 0.0;
  for (const auto& t : tensors) worst = std::max(worst, t.max_relative_error);
  return worst;
}

const TensorGradError* GradReport::worst() const noexcept {
  const TensorGradError* out = nullptr;
  for (const auto& t : tensors) {
    if (out == nullptr || t.max_relative_error > out->max_relative_error) out = &t;
  }
  return out;
}

double relative_error(double analytic, double numeric) noexcept {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

GradReport grad_check(const std::function<long double()>& loss,
                      std::span<const CheckedTensor> tensors, double step) {
  if (!(step > 0.0)) throw InvalidArgument("grad_check step must be positive");
  auto evaluate = [&loss]() {
    const long double v = loss();
    if (!std::isfinite(v)) throw EvaluationError("loss is not finite during grad_check");
    return v;
  };
  (void)evaluate();

  GradReport report;
  for (const CheckedTensor& tensor : tensors) {
    if (tensor.value == nullptr || tensor.analytic == nullptr ||
        !tensor.value->same_shape(*tensor.analytic)) {
      throw ShapeError("grad_check: tensor '" + tensor.name +
                       "' has no analytic gradient of matching shape");
    }
    TensorGradError entry{tensor.name};
    Matrix& value = *tensor.value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      const double up = saved + step;
      const double down = saved - step;
      value[i] = up;
      const long double plus = evaluate();
      value[i] = down;
      const long double minus = evaluate();
      value[i] = saved;
      // Divide by the step actually taken after rounding.
      const auto numeric =
          static_cast<double>((plus - minus) / (static_cast<long double>(up) - down));
      const double analytic = (*tensor.analytic)[i];
      const double err = relative_error(analytic, numeric);
      if (i == 0 || err > entry.max_relative_error) {
        entry.max_relative_error = err;
        entry.worst_index = i;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    report.coordinates += value.size();
    report.tensors.push_back(std::move(entry));
  }
  return report;
}

}  // namespace boxprior::numerics
