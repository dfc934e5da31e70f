#pragma once

// Toy multi-scale encoders, the box-level object branch with class-aware
// attention, the gated residual fusion baseline and per-layer 3D
// classifiers. Every op exists as a plain forward and, where it carries
// parameters, as a taped op for gradients.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "boxprior/fusion/config.hpp"
#include "boxprior/geometry.hpp"
#include "boxprior/numerics/autodiff.hpp"
#include "boxprior/numerics/matrix.hpp"
#include "boxprior/numerics/params.hpp"
#include "boxprior/scenedata.hpp"

namespace boxprior::fusion {

using numerics::Matrix;
using numerics::MlpParams;
using numerics::Tape;
using numerics::Var;

template <class T>
struct ModelParamsT {
  /// 4 -> D_1 -> ... -> D_L over (x, y, z, intensity); layer l is tapped.
  numerics::MlpT<T> point_encoder;
  /// One per layer, 3 -> D_l over local RGB means at that layer's scale.
  std::vector<numerics::MlpT<T>> pixel_encoders;
  /// One per layer, D_l -> D_l, applied to 3D features before fusion.
  std::vector<numerics::MlpT<T>> learners;
  /// sum_l 2 D_l -> D.
  numerics::MlpT<T> downsampler;
  numerics::AttentionT<T> attention;
  /// c x D, one row per class.
  T class_embeddings;
  /// D -> c logits of the object branch.
  numerics::MlpT<T> branch_classifier;
  /// One per layer, D_l -> c logits.
  std::vector<numerics::MlpT<T>> layer_classifiers;
};

using ModelParams = ModelParamsT<Matrix>;
using ModelVars = ModelParamsT<Var>;

template <class From, class Fn>
auto map_tensors(const ModelParamsT<From>& p, Fn&& fn) {
  using To = decltype(fn(p.class_embeddings));
  auto each = [&](const auto& list) {
    std::vector<numerics::MlpT<To>> out;
    for (const auto& mlp : list) out.push_back(numerics::map_tensors(mlp, fn));
    return out;
  };
  ModelParamsT<To> out;
  out.point_encoder = numerics::map_tensors(p.point_encoder, fn);
  out.pixel_encoders = each(p.pixel_encoders);
  out.learners = each(p.learners);
  out.downsampler = numerics::map_tensors(p.downsampler, fn);
  out.attention = numerics::map_tensors(p.attention, fn);
  out.class_embeddings = fn(p.class_embeddings);
  out.branch_classifier = numerics::map_tensors(p.branch_classifier, fn);
  out.layer_classifiers = each(p.layer_classifiers);
  return out;
}

/// Visits every tensor with a stable dotted name, in a fixed order.
template <class T, class Fn>
void for_each_tensor(ModelParamsT<T>& p, Fn&& fn) {
  using numerics::for_each_tensor;
  for_each_tensor(p.point_encoder, "point_encoder", fn);
  for (std::size_t l = 0; l < p.pixel_encoders.size(); ++l) {
    for_each_tensor(p.pixel_encoders[l], "pixel_encoder" + std::to_string(l), fn);
  }
  for (std::size_t l = 0; l < p.learners.size(); ++l) {
    for_each_tensor(p.learners[l], "learner" + std::to_string(l), fn);
  }
  for_each_tensor(p.downsampler, "downsampler", fn);
  for_each_tensor(p.attention, "attention", fn);
  fn(std::string("class_embeddings"), p.class_embeddings);
  for_each_tensor(p.branch_classifier, "branch_classifier", fn);
  for (std::size_t l = 0; l < p.layer_classifiers.size(); ++l) {
    for_each_tensor(p.layer_classifiers[l], "layer_classifier" + std::to_string(l), fn);
  }
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed);
/// Throws ShapeError when any tensor disagrees with `config`.
void validate(const ModelParams& params, const ModelConfig& config);
std::size_t parameter_count(const ModelParams& params);

/// Tensors as tape parameters (trainable) or constants.
ModelVars bind(Tape& t, const ModelParams& params, bool trainable = true);
ModelParams gradients(const Tape& t, const ModelVars& vars);

// ---------------------------------------------------------------- features

struct FeatureStack {
  std::vector<Matrix> features2d;       ///< per layer, N_img x D_l
  std::vector<Matrix> features3d_full;  ///< per layer, N x D_l
  std::vector<Matrix> features3d_fov;   ///< per layer, N_img x D_l, FOV order

  std::size_t layers() const noexcept { return features2d.size(); }
};

/// Raw per-point encoder input: (0.1 x, 0.1 y, 0.1 z, 7 (intensity - 0.5)).
Matrix point_inputs(const geometry::PointCloud& cloud);

/// Per projected point, the mean RGB / 255 over the (2r+1)^2 window around
/// its pixel (clipped to the image), with r = 2^l - 1 for layer l.
std::vector<Matrix> pixel_inputs(const scenedata::RgbImage& image,
                                 std::span<const geometry::ProjectedPoint> projected,
                                 std::size_t layers);

/// Source indices of the projected points, in projection order.
std::vector<std::size_t> fov_indices(std::span<const geometry::ProjectedPoint> projected);

/// Runs both toy encoders. Throws ShapeError when the parameters do not
/// match the layer count.
FeatureStack encode_toy(const geometry::PointCloud& cloud, const scenedata::RgbImage& image,
                        std::span<const geometry::ProjectedPoint> projected,
                        const ModelParams& params);

/// concat(learner(F3D_fov_l), F2D_l), learned block first.
Matrix fuse_layer(const FeatureStack& stack, std::size_t layer, const MlpParams& learner);

/// Concatenates the fused layers and maps them to width D.
Matrix fuse_multiscale(std::span<const Matrix> fused_layers, const MlpParams& downsampler);

struct BoxFeatureSet {
  geometry::BoundingBox2D box;
  std::vector<std::size_t> rows;            ///< positions in the FOV point set
  std::vector<std::size_t> source_indices;  ///< positions in the full cloud
  Matrix features;                          ///< rows.size() x D
  std::vector<int> labels;

  bool empty() const noexcept { return rows.empty(); }
};

/// Rows strictly inside `box`. `point_labels` is indexed by source index.
BoxFeatureSet select_box_features(const Matrix& fused,
                                  std::span<const geometry::ProjectedPoint> projected,
                                  const geometry::BoundingBox2D& box,
                                  std::span<const int> point_labels);

/// f2d + sigmoid(mlp_a(f2d3d)) (.) mlp_b(f2d3d)
Matrix msfskd_fuse(const Matrix& f2d, const Matrix& f2d3d, const MlpParams& mlp_a,
                   const MlpParams& mlp_b);

/// Attention over the box members, queried by their class embeddings and
/// keyed by each member's cosine similarity to the box-class embedding.
/// Returns nullopt for an empty box.
std::optional<Matrix> class_aware_attention(const BoxFeatureSet& bfs,
                                            const Matrix& class_embeddings,
                                            const numerics::AttentionParams& params,
                                            double epsilon);

/// Row softmax of the classifier logits.
Matrix branch_predict(const Matrix& attended, const MlpParams& classifier);
Matrix predict_3d_layer(const FeatureStack& stack, std::size_t layer,
                        const MlpParams& classifier);

// ------------------------------------------------------------------- taped

namespace ad {

Var fuse_layer(Tape& t, Var features3d, Var features2d, const numerics::MlpT<Var>& learner);
Var fuse_multiscale(Tape& t, std::span<const Var> fused_layers,
                    const numerics::MlpT<Var>& downsampler);
Var msfskd_fuse(Tape& t, Var f2d, Var f2d3d, const numerics::MlpT<Var>& mlp_a,
                const numerics::MlpT<Var>& mlp_b);
/// `labels` must be non-empty. Returns the attended N_b x D features.
Var class_aware_attention(Tape& t, Var features, std::span<const int> labels, int box_class,
                          Var class_embeddings, const numerics::AttentionT<Var>& params,
                          double epsilon);

}  // namespace ad

}  // namespace boxprior::fusion
