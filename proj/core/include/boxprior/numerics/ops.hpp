#pragma once

// Plain (non-differentiable) dense forward operations. Defined for double
// and long double matrices.

#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

#include "boxprior/numerics/matrix.hpp"
#include "boxprior/numerics/params.hpp"

namespace boxprior::numerics {

template <class T>
using Scalar = std::type_identity_t<T>;

template <class T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
/// a * b^T
template <class T>
BasicMatrix<T> matmul_transposed(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
/// a^T * b
template <class T>
BasicMatrix<T> transposed_matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
template <class T>
BasicMatrix<T> transpose(const BasicMatrix<T>& m);

template <class T>
BasicMatrix<T> add(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
template <class T>
BasicMatrix<T> hadamard(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
template <class T>
BasicMatrix<T> scale(const BasicMatrix<T>& m, Scalar<T> factor);
/// Adds the 1 x cols `bias` to every row.
template <class T>
BasicMatrix<T> add_row_bias(const BasicMatrix<T>& m, const BasicMatrix<T>& bias);

/// Column-wise concatenation; all parts must have the same row count.
template <class T>
BasicMatrix<T> concat_cols(std::span<const BasicMatrix<T>> parts);
inline Matrix concat_cols(std::span<const Matrix> parts) { return concat_cols<double>(parts); }
template <class T>
BasicMatrix<T> gather_rows(const BasicMatrix<T>& m, std::span<const std::size_t> rows);

template <class T>
BasicMatrix<T> relu(const BasicMatrix<T>& m);
/// Entrywise logistic function; saturates to exactly 0 / 1 without overflow.
template <class T>
BasicMatrix<T> sigmoid(const BasicMatrix<T>& m);
double sigmoid(double x) noexcept;
long double sigmoid(long double x) noexcept;
template <class T>
BasicMatrix<T> tanh(const BasicMatrix<T>& m);
template <class T>
BasicMatrix<T> apply_activation(const BasicMatrix<T>& m, Activation activation);

/// Row-wise softmax with per-row max subtraction.
template <class T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m);

/// Per row pair: <a_i, b_i> / max(|a_i| |b_i|, epsilon).
template <class T>
std::vector<T> cosine_similarity(const BasicMatrix<T>& a, const BasicMatrix<T>& b,
                                 Scalar<T> epsilon);

/// Sequential affine + activation layers.
template <class T>
BasicMatrix<T> mlp_forward(const MlpT<BasicMatrix<T>>& params, const BasicMatrix<T>& input);

/// Output of every layer, first layer first.
template <class T>
std::vector<BasicMatrix<T>> mlp_forward_taps(const MlpT<BasicMatrix<T>>& params,
                                             const BasicMatrix<T>& input);

/// Row-stochastic attention weights of every head:
/// softmax((Q W^Q_i) (k W^K_i)^T / sqrt(D)), each N x N.
template <class T>
std::vector<BasicMatrix<T>> attention_weights(const AttentionT<BasicMatrix<T>>& params,
                                              const BasicMatrix<T>& query,
                                              std::span<const Scalar<T>> key_scalar);

/// Class-aware multi-head attention. Keys are the scalar per-row
/// similarities (an N x 1 matrix), so W^K lifts each scalar to the head
/// width. Heads have width D/h and are concatenated back to width D; there
/// is no output projection. Scores are scaled by 1/sqrt(D).
template <class T>
BasicMatrix<T> multihead_attention(const AttentionT<BasicMatrix<T>>& params,
                                   const BasicMatrix<T>& query,
                                   std::span<const Scalar<T>> key_scalar,
                                   const BasicMatrix<T>& value);

}  // namespace boxprior::numerics
