#include "boxprior/numerics/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "boxprior/errors.hpp"

namespace boxprior::numerics {

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows) {
    throw ShapeError(std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " prediction rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw LabelError("label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

template <class T>
void check_normalized(const BasicMatrix<T>& probs, const char* what) {
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    const T total = std::accumulate(row.begin(), row.end(), T(0));
    const bool non_negative =
        std::all_of(row.begin(), row.end(), [](T v) { return v >= T(0); });
    if (!non_negative || std::abs(total - 1.0) > kNormalizationTolerance) {
      throw NormalizationError(std::string(what) + " row " + std::to_string(i) +
                               " is not a probability vector (sum " +
                               std::to_string(static_cast<double>(total)) + ")");
    }
  }
}

template <class T>
T cross_entropy(const BasicMatrix<T>& logits, std::span<const int> labels) {
  check_labels(labels, logits.rows(), logits.cols());
  if (logits.rows() == 0) return T(0);
  T total = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const T peak = *std::max_element(row.begin(), row.end());
    T sum = 0;
    for (T v : row) sum += std::exp(v - peak);
    total += peak + std::log(sum) - row[labels[i]];
  }
  return total / static_cast<T>(logits.rows());
}

template <class T>
T kl_divergence(const BasicMatrix<T>& p, const BasicMatrix<T>& q) {
  if (!p.same_shape(q)) {
    throw ShapeError("kl_divergence: " + p.shape_string() + " vs " + q.shape_string());
  }
  check_normalized(p, "KL target");
  check_normalized(q, "KL input");
  if (p.rows() == 0) return T(0);
  const T floor = kProbabilityFloor;
  T total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T pi = std::max(p[i], floor);
    const T qi = std::max(q[i], floor);
    total += p[i] * (std::log(pi) - std::log(qi));
  }
  return total / static_cast<T>(p.rows());
}

template <class T>
std::vector<T> lovasz_jaccard_increments(std::span<const T> sorted_foreground) {
  const std::size_t n = sorted_foreground.size();
  std::vector<T> out(n);
  const T gts = std::accumulate(sorted_foreground.begin(), sorted_foreground.end(), T(0));
  T cum_fg = 0;
  T cum_bg = 0;
  T previous = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cum_fg += sorted_foreground[i];
    cum_bg += T(1) - sorted_foreground[i];
    const T intersection = gts - cum_fg;
    const T uni = gts + cum_bg;
    const T jaccard = T(1) - intersection / uni;
    out[i] = jaccard - previous;
    previous = jaccard;
  }
  return out;
}

template <class T>
T lovasz_softmax(const BasicMatrix<T>& probs, std::span<const int> labels) {
  check_labels(labels, probs.rows(), probs.cols());
  const std::size_t n = probs.rows();
  if (n == 0) return T(0);
  std::vector<T> errors(n);
  std::vector<T> foreground(n);
  std::vector<std::size_t> order(n);
  std::vector<T> sorted_fg(n);
  T total = 0;
  int present = 0;
  for (std::size_t c = 0; c < probs.cols(); ++c) {
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      foreground[i] = labels[i] == static_cast<int>(c) ? T(1) : T(0);
      any = any || foreground[i] > T(0);
      errors[i] = std::abs(foreground[i] - probs(i, c));
    }
    if (!any) continue;
    ++present;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });
    for (std::size_t k = 0; k < n; ++k) sorted_fg[k] = foreground[order[k]];
    const auto increments = lovasz_jaccard_increments<T>(sorted_fg);
    for (std::size_t k = 0; k < n; ++k) total += errors[order[k]] * increments[k];
  }
  return total / static_cast<T>(present);
}

#define BOXPRIOR_INSTANTIATE_LOSSES(T)                                                 \
  template void check_normalized(const BasicMatrix<T>&, const char*);                  \
  template T cross_entropy(const BasicMatrix<T>&, std::span<const int>);               \
  template T kl_divergence(const BasicMatrix<T>&, const BasicMatrix<T>&);              \
  template std::vector<T> lovasz_jaccard_increments(std::span<const T>);               \
  template T lovasz_softmax(const BasicMatrix<T>&, std::span<const int>);

BOXPRIOR_INSTANTIATE_LOSSES(double)
BOXPRIOR_INSTANTIATE_LOSSES(long double)

}  // namespace boxprior::numerics
