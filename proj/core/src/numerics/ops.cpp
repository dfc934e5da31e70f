#include "boxprior/numerics/ops.hpp"

#include <algorithm>
#include <cmath>

#include "boxprior/errors.hpp"

namespace boxprior::numerics {
namespace {

template <class T>
void require(bool ok, const char* op, const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (!ok) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() +
                     " and " + b.shape_string());
  }
}

template <class T>
T logistic(T x) noexcept {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <class T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.cols() == b.rows(), "matmul", a, b);
  BasicMatrix<T> out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  const std::size_t depth = a.cols();
  const T* bd = b.data().data();
  // Four output columns at a time, accumulated in registers.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ar = a.row(i).data();
    T* dst = out.row(i).data();
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      T c0 = 0, c1 = 0, c2 = 0, c3 = 0;
      for (std::size_t k = 0; k < depth; ++k) {
        const T x = ar[k];
        const T* src = bd + k * n + j;
        c0 += x * src[0];
        c1 += x * src[1];
        c2 += x * src[2];
        c3 += x * src[3];
      }
      dst[j] = c0;
      dst[j + 1] = c1;
      dst[j + 2] = c2;
      dst[j + 3] = c3;
    }
    for (; j < n; ++j) {
      T c = 0;
      for (std::size_t k = 0; k < depth; ++k) c += ar[k] * bd[k * n + j];
      dst[j] = c;
    }
  }
  return out;
}

template <class T>
BasicMatrix<T> matmul_transposed(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.cols() == b.cols(), "matmul_transposed", a, b);
  BasicMatrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto br = b.row(j);
      T acc = 0;
      for (std::size_t k = 0; k < ar.size(); ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

template <class T>
BasicMatrix<T> transposed_matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.rows() == b.rows(), "transposed_matmul", a, b);
  BasicMatrix<T> out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto ar = a.row(k);
    const auto br = b.row(k);
    for (std::size_t i = 0; i < ar.size(); ++i) {
      const T aki = ar[i];
      if (aki == T(0)) continue;
      T* dst = out.row(i).data();
      for (std::size_t j = 0; j < br.size(); ++j) dst[j] += aki * br[j];
    }
  }
  return out;
}

template <class T>
BasicMatrix<T> transpose(const BasicMatrix<T>& m) {
  BasicMatrix<T> out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  }
  return out;
}

template <class T>
BasicMatrix<T> add(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.same_shape(b), "add", a, b);
  BasicMatrix<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <class T>
BasicMatrix<T> hadamard(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.same_shape(b), "hadamard", a, b);
  BasicMatrix<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

template <class T>
BasicMatrix<T> scale(const BasicMatrix<T>& m, Scalar<T> factor) {
  BasicMatrix<T> out = m;
  for (T& v : out.data()) v *= factor;
  return out;
}

template <class T>
BasicMatrix<T> add_row_bias(const BasicMatrix<T>& m, const BasicMatrix<T>& bias) {
  require(bias.rows() == 1 && bias.cols() == m.cols(), "add_row_bias", m, bias);
  BasicMatrix<T> out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
  return out;
}

template <class T>
BasicMatrix<T> concat_cols(std::span<const BasicMatrix<T>> parts) {
  if (parts.empty()) return BasicMatrix<T>();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols", parts.front(), p);
    cols += p.cols();
  }
  BasicMatrix<T> out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    T* dst = out.row(i).data();
    for (const auto& p : parts) {
      const auto src = p.row(i);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return out;
}

template <class T>
BasicMatrix<T> gather_rows(const BasicMatrix<T>& m, std::span<const std::size_t> rows) {
  BasicMatrix<T> out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) +
                       " out of range for " + m.shape_string());
    }
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

template <class T>
BasicMatrix<T> relu(const BasicMatrix<T>& m) {
  BasicMatrix<T> out = m;
  for (T& v : out.data()) v = v > T(0) ? v : T(0);
  return out;
}

double sigmoid(double x) noexcept { return logistic(x); }
long double sigmoid(long double x) noexcept { return logistic(x); }

template <class T>
BasicMatrix<T> sigmoid(const BasicMatrix<T>& m) {
  BasicMatrix<T> out = m;
  for (T& v : out.data()) v = logistic(v);
  return out;
}

template <class T>
BasicMatrix<T> tanh(const BasicMatrix<T>& m) {
  BasicMatrix<T> out = m;
  for (T& v : out.data()) v = std::tanh(v);
  return out;
}

template <class T>
BasicMatrix<T> apply_activation(const BasicMatrix<T>& m, Activation activation) {
  switch (activation) {
    case Activation::kTanh:
      return tanh(m);
    case Activation::kRelu:
      return relu(m);
    case Activation::kSigmoid:
      return sigmoid(m);
    case Activation::kNone:
      break;
  }
  return m;
}

template <class T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m) {
  BasicMatrix<T> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto src = m.row(i);
    auto dst = out.row(i);
    if (src.empty()) continue;
    const T peak = *std::max_element(src.begin(), src.end());
    T total = 0;
    for (std::size_t j = 0; j < src.size(); ++j) {
      dst[j] = std::exp(src[j] - peak);
      total += dst[j];
    }
    for (T& v : dst) v /= total;
  }
  return out;
}

template <class T>
std::vector<T> cosine_similarity(const BasicMatrix<T>& a, const BasicMatrix<T>& b,
                                 Scalar<T> epsilon) {
  require(a.same_shape(b), "cosine_similarity", a, b);
  std::vector<T> out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    const auto br = b.row(i);
    T dot = 0;
    T aa = 0;
    T bb = 0;
    for (std::size_t k = 0; k < ar.size(); ++k) {
      dot += ar[k] * br[k];
      aa += ar[k] * ar[k];
      bb += br[k] * br[k];
    }
    out[i] = dot / std::max(std::sqrt(aa) * std::sqrt(bb), epsilon);
  }
  return out;
}

template <class T>
BasicMatrix<T> mlp_forward(const MlpT<BasicMatrix<T>>& params, const BasicMatrix<T>& input) {
  BasicMatrix<T> x = input;
  for (const auto& layer : params.layers) {
    x = apply_activation(add_row_bias(matmul(x, layer.weight), layer.bias), layer.activation);
  }
  return x;
}

template <class T>
std::vector<BasicMatrix<T>> mlp_forward_taps(const MlpT<BasicMatrix<T>>& params,
                                             const BasicMatrix<T>& input) {
  std::vector<BasicMatrix<T>> taps;
  taps.reserve(params.layers.size());
  const BasicMatrix<T>* x = &input;
  for (const auto& layer : params.layers) {
    taps.push_back(
        apply_activation(add_row_bias(matmul(*x, layer.weight), layer.bias), layer.activation));
    x = &taps.back();
  }
  return taps;
}

namespace {

template <class T>
void check_attention_inputs(const AttentionT<BasicMatrix<T>>& params,
                            const BasicMatrix<T>& query, std::span<const T> key_scalar) {
  validate(params, query.cols());
  if (key_scalar.size() != query.rows()) {
    throw ShapeError("attention: " + std::to_string(key_scalar.size()) +
                     " key scalars for " + std::to_string(query.rows()) + " query rows");
  }
}

}  // namespace

template <class T>
std::vector<BasicMatrix<T>> attention_weights(const AttentionT<BasicMatrix<T>>& params,
                                              const BasicMatrix<T>& query,
                                              std::span<const Scalar<T>> key_scalar) {
  check_attention_inputs(params, query, key_scalar);
  const auto keys_in = BasicMatrix<T>::column(key_scalar);
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(query.cols()));
  std::vector<BasicMatrix<T>> weights;
  weights.reserve(params.heads);
  for (std::size_t h = 0; h < params.heads; ++h) {
    const auto q = matmul(query, params.query[h]);
    const auto k = matmul(keys_in, params.key[h]);
    weights.push_back(softmax_rows(scale(matmul_transposed(q, k), inv_sqrt_d)));
  }
  return weights;
}

template <class T>
BasicMatrix<T> multihead_attention(const AttentionT<BasicMatrix<T>>& params,
                                   const BasicMatrix<T>& query,
                                   std::span<const Scalar<T>> key_scalar,
                                   const BasicMatrix<T>& value) {
  check_attention_inputs(params, query, key_scalar);
  if (value.rows() != query.rows() || value.cols() != query.cols()) {
    throw ShapeError("attention: value " + value.shape_string() + " vs query " +
                     query.shape_string());
  }
  const auto weights = attention_weights(params, query, key_scalar);
  std::vector<BasicMatrix<T>> heads;
  heads.reserve(params.heads);
  for (std::size_t h = 0; h < params.heads; ++h) {
    heads.push_back(matmul(weights[h], matmul(value, params.value[h])));
  }
  return concat_cols<T>(heads);
}

#define BOXPRIOR_INSTANTIATE_OPS(T)                                                          \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);              \
  template BasicMatrix<T> matmul_transposed(const BasicMatrix<T>&, const BasicMatrix<T>&);   \
  template BasicMatrix<T> transposed_matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);   \
  template BasicMatrix<T> transpose(const BasicMatrix<T>&);                                  \
  template BasicMatrix<T> add(const BasicMatrix<T>&, const BasicMatrix<T>&);                 \
  template BasicMatrix<T> hadamard(const BasicMatrix<T>&, const BasicMatrix<T>&);            \
  template BasicMatrix<T> scale(const BasicMatrix<T>&, Scalar<T>);                           \
  template BasicMatrix<T> add_row_bias(const BasicMatrix<T>&, const BasicMatrix<T>&);        \
  template BasicMatrix<T> concat_cols(std::span<const BasicMatrix<T>>);                      \
  template BasicMatrix<T> gather_rows(const BasicMatrix<T>&, std::span<const std::size_t>);  \
  template BasicMatrix<T> relu(const BasicMatrix<T>&);                                       \
  template BasicMatrix<T> sigmoid(const BasicMatrix<T>&);                                    \
  template BasicMatrix<T> tanh(const BasicMatrix<T>&);                                       \
  template BasicMatrix<T> apply_activation(const BasicMatrix<T>&, Activation);               \
  template BasicMatrix<T> softmax_rows(const BasicMatrix<T>&);                               \
  template std::vector<T> cosine_similarity(const BasicMatrix<T>&, const BasicMatrix<T>&,    \
                                            Scalar<T>);                                      \
  template BasicMatrix<T> mlp_forward(const MlpT<BasicMatrix<T>>&, const BasicMatrix<T>&);   \
  template std::vector<BasicMatrix<T>> mlp_forward_taps(const MlpT<BasicMatrix<T>>&,         \
                                                        const BasicMatrix<T>&);              \
  template std::vector<BasicMatrix<T>> attention_weights(                                    \
      const AttentionT<BasicMatrix<T>>&, const BasicMatrix<T>&, std::span<const Scalar<T>>); \
  template BasicMatrix<T> multihead_attention(const AttentionT<BasicMatrix<T>>&,             \
                                              const BasicMatrix<T>&,                         \
                                              std::span<const Scalar<T>>,                    \
                                              const BasicMatrix<T>&);

BOXPRIOR_INSTANTIATE_OPS(double)
BOXPRIOR_INSTANTIATE_OPS(long double)

}  // namespace boxprior::numerics
