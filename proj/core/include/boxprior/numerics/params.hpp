#pragma once

// Parameter containers shared by the plain forward ops and the taped
// (differentiable) ops. They are templated on the tensor handle so the same
// layout can hold values (Matrix) or tape variables (Var).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "boxprior/errors.hpp"
#include "boxprior/numerics/matrix.hpp"
#include "boxprior/numerics/random.hpp"

namespace boxprior::numerics {

enum class Activation { kNone, kRelu, kSigmoid, kTanh };

std::string to_string(Activation a);

/// y = act(x W + b), W: in x out, b: 1 x out.
template <class T>
struct DenseLayerT {
  T weight;
  T bias;
  Activation activation = Activation::kNone;
};

template <class T>
struct MlpT {
  std::vector<DenseLayerT<T>> layers;
};

/// Per-head projections for class-aware attention: for head i,
/// query[i]: D x (D/h), key[i]: 1 x (D/h), value[i]: D x (D/h).
template <class T>
struct AttentionT {
  std::size_t heads = 1;
  std::vector<T> query;
  std::vector<T> key;
  std::vector<T> value;
};

using DenseLayer = DenseLayerT<Matrix>;
using MlpParams = MlpT<Matrix>;
using AttentionParams = AttentionT<Matrix>;
using WideMlpParams = MlpT<WideMatrix>;
using WideAttentionParams = AttentionT<WideMatrix>;

template <class From, class Fn>
auto map_tensors(const MlpT<From>& mlp, Fn&& fn) {
  using To = decltype(fn(mlp.layers.front().weight));
  MlpT<To> out;
  out.layers.reserve(mlp.layers.size());
  for (const auto& layer : mlp.layers) {
    out.layers.push_back({fn(layer.weight), fn(layer.bias), layer.activation});
  }
  return out;
}

template <class From, class Fn>
auto map_tensors(const AttentionT<From>& att, Fn&& fn) {
  using To = decltype(fn(att.query.front()));
  AttentionT<To> out;
  out.heads = att.heads;
  for (const auto& q : att.query) out.query.push_back(fn(q));
  for (const auto& k : att.key) out.key.push_back(fn(k));
  for (const auto& v : att.value) out.value.push_back(fn(v));
  return out;
}

template <class T, class Fn>
void for_each_tensor(MlpT<T>& mlp, const std::string& prefix, Fn&& fn) {
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    fn(prefix + ".layer" + std::to_string(i) + ".weight", mlp.layers[i].weight);
    fn(prefix + ".layer" + std::to_string(i) + ".bias", mlp.layers[i].bias);
  }
}

template <class T, class Fn>
void for_each_tensor(AttentionT<T>& att, const std::string& prefix, Fn&& fn) {
  for (std::size_t i = 0; i < att.heads; ++i) {
    const std::string head = prefix + ".head" + std::to_string(i);
    fn(head + ".query", att.query[i]);
    fn(head + ".key", att.key[i]);
    fn(head + ".value", att.value[i]);
  }
}

/// Input width of the first layer / output width of the last layer.
/// validate(mlp) throws ShapeError when adjacent layers disagree or a bias
/// is not 1 x out; validate(att, width) unless h >= 1, D % h == 0 and every
/// head matrix has the documented shape for model width `width`.
template <class M>
std::size_t input_width(const MlpT<M>& mlp) {
  if (mlp.layers.empty()) throw ShapeError("MLP has no layers");
  return mlp.layers.front().weight.rows();
}

template <class M>
std::size_t output_width(const MlpT<M>& mlp) {
  if (mlp.layers.empty()) throw ShapeError("MLP has no layers");
  return mlp.layers.back().weight.cols();
}

template <class M>
void validate(const MlpT<M>& mlp) {
  if (mlp.layers.empty()) throw ShapeError("MLP has no layers");
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    const auto& layer = mlp.layers[i];
    if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols()) {
      throw ShapeError("MLP layer " + std::to_string(i) + " bias " +
                       layer.bias.shape_string() + " does not match weight " +
                       layer.weight.shape_string());
    }
    if (i > 0 && mlp.layers[i - 1].weight.cols() != layer.weight.rows()) {
      throw ShapeError("MLP layer " + std::to_string(i) + " expects width " +
                       std::to_string(layer.weight.rows()) + " but previous layer emits " +
                       std::to_string(mlp.layers[i - 1].weight.cols()));
    }
  }
}

template <class M>
void validate(const AttentionT<M>& att, std::size_t width) {
  if (att.heads == 0) throw ShapeError("attention needs at least one head");
  if (width % att.heads != 0) {
    throw ShapeError("attention width " + std::to_string(width) +
                     " is not divisible by " + std::to_string(att.heads) + " heads");
  }
  const std::size_t head_width = width / att.heads;
  if (att.query.size() != att.heads || att.key.size() != att.heads ||
      att.value.size() != att.heads) {
    throw ShapeError("attention parameter lists do not match the head count");
  }
  for (std::size_t h = 0; h < att.heads; ++h) {
    if (att.query[h].rows() != width || att.query[h].cols() != head_width ||
        att.key[h].rows() != 1 || att.key[h].cols() != head_width ||
        att.value[h].rows() != width || att.value[h].cols() != head_width) {
      throw ShapeError("attention head " + std::to_string(h) +
                       " has the wrong shape for width " + std::to_string(width));
    }
  }
}

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
/// `widths` lists layer sizes including the input (n layers -> n+1 widths).
/// Hidden layers use `hidden`, the final layer uses `last`.
MlpParams init_mlp(std::span<const std::size_t> widths, Activation hidden,
                   Activation last, Rng& rng);

AttentionParams init_attention(std::size_t width, std::size_t heads, Rng& rng);

/// Glorot-uniform matrix with fan_in = rows, fan_out = cols.
Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace boxprior::numerics
