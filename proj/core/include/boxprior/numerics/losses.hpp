#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "boxprior/numerics/matrix.hpp"

namespace boxprior::numerics {

/// Floor applied to probabilities before taking logs in the KL divergence.
inline constexpr double kProbabilityFloor = 1e-12;
/// Row-sum tolerance accepted as "a probability vector".
inline constexpr double kNormalizationTolerance = 1e-9;

/// Mean over rows of -log softmax(logits)[label].
/// Throws LabelError for labels outside [0, cols) and ShapeError when the
/// label count differs from the row count.
template <class T>
T cross_entropy(const BasicMatrix<T>& logits, std::span<const int> labels);

/// Mean over rows of sum_j p_j (log p_j - log q_j), both sides floored at
/// kProbabilityFloor. Throws NormalizationError when a row of p or q does
/// not sum to 1 within kNormalizationTolerance.
template <class T>
T kl_divergence(const BasicMatrix<T>& p, const BasicMatrix<T>& q);

/// Lovasz-softmax: for every class present in `labels`, the Lovasz
/// extension of the Jaccard loss evaluated on the per-point error vector
/// |[label == c] - p_c|; averaged over present classes.
template <class T>
T lovasz_softmax(const BasicMatrix<T>& probs, std::span<const int> labels);

/// Gradient of the Lovasz extension for one class: given foreground flags
/// already sorted by descending error, returns the Jaccard-loss increments
/// (the weights multiplying the sorted errors).
template <class T>
std::vector<T> lovasz_jaccard_increments(std::span<const T> sorted_foreground);
inline std::vector<double> lovasz_jaccard_increments(std::span<const double> sorted_foreground) {
  return lovasz_jaccard_increments<double>(sorted_foreground);
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes);
template <class T>
void check_normalized(const BasicMatrix<T>& probs, const char* what);

}  // namespace boxprior::numerics
