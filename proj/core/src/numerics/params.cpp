#include "boxprior/numerics/params.hpp"

#include <cmath>

#include "boxprior/errors.hpp"

namespace boxprior::numerics {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kTanh:
      return "tanh";
    case Activation::kNone:
      break;
  }
  return "none";
}

Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-limit, limit);
  return m;
}

MlpParams init_mlp(std::span<const std::size_t> widths, Activation hidden,
                   Activation last, Rng& rng) {
  if (widths.size() < 2) throw ShapeError("MLP needs at least input and output widths");
  MlpParams mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool is_last = i + 2 == widths.size();
    mlp.layers.push_back({glorot_uniform(widths[i], widths[i + 1], rng),
                          Matrix(1, widths[i + 1]), is_last ? last : hidden});
  }
  return mlp;
}

AttentionParams init_attention(std::size_t width, std::size_t heads, Rng& rng) {
  if (heads == 0 || width % heads != 0) {
    throw ShapeError("attention width must be divisible by a positive head count");
  }
  const std::size_t head_width = width / heads;
  AttentionParams att;
  att.heads = heads;
  for (std::size_t h = 0; h < heads; ++h) {
    att.query.push_back(glorot_uniform(width, head_width, rng));
    att.key.push_back(glorot_uniform(1, head_width, rng));
    att.value.push_back(glorot_uniform(width, head_width, rng));
  }
  return att;
}

}  // namespace boxprior::numerics
