#include "boxprior/fusion/model.hpp"

#include <array>
#include <cmath>

#include "boxprior/errors.hpp"
#include "boxprior/numerics/ops.hpp"
#include "boxprior/numerics/random.hpp"

namespace boxprior::fusion {
namespace {

using numerics::Activation;

constexpr std::size_t kPointInputWidth = 4;
constexpr std::size_t kPixelInputWidth = 3;
constexpr double kCoordinateScale = 0.1;
constexpr double kIntensityScale = 7.0;
// Spreads first-layer unit thresholds across the intensity range.
constexpr double kPointBiasRange = 1.5;
constexpr Activation kHidden = Activation::kTanh;

void expect_width(const Matrix& m, std::size_t cols, const std::string& what) {
  if (m.cols() != cols) {
    throw ShapeError(what + " has " + std::to_string(m.cols()) + " columns, expected " +
                     std::to_string(cols));
  }
}

void expect_mlp(const MlpParams& mlp, std::size_t in, std::size_t out, const std::string& what) {
  numerics::validate(mlp);
  if (numerics::input_width(mlp) != in || numerics::output_width(mlp) != out) {
    throw ShapeError(what + " maps " + std::to_string(numerics::input_width(mlp)) + " -> " +
                     std::to_string(numerics::output_width(mlp)) + ", expected " +
                     std::to_string(in) + " -> " + std::to_string(out));
  }
}

Matrix unit_rows(std::size_t rows, std::size_t cols, numerics::Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double norm = 0.0;
    while (norm == 0.0) {
      norm = 0.0;
      for (double& v : m.row(r)) {
        v = rng.normal();
        norm += v * v;
      }
    }
    norm = std::sqrt(norm);
    for (double& v : m.row(r)) v /= norm;
  }
  return m;
}

std::vector<std::size_t> repeated_rows(std::size_t row, std::size_t count) {
  return std::vector<std::size_t>(count, row);
}

std::vector<std::size_t> label_rows(std::span<const int> labels, std::size_t classes) {
  std::vector<std::size_t> rows;
  rows.reserve(labels.size());
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw LabelError("class " + std::to_string(label) + " has no embedding (c = " +
                       std::to_string(classes) + ")");
    }
    rows.push_back(static_cast<std::size_t>(label));
  }
  return rows;
}

}  // namespace

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  numerics::Rng rng(seed);
  const std::size_t L = config.layers;
  const std::size_t D = config.hidden;
  const std::size_t c = config.classes;
  const auto& dl = config.layer_widths;

  ModelParams p;
  std::vector<std::size_t> widths{kPointInputWidth};
  widths.insert(widths.end(), dl.begin(), dl.end());
  p.point_encoder = numerics::init_mlp(widths, kHidden, kHidden, rng);
  for (double& b : p.point_encoder.layers.front().bias.data()) {
    b = rng.uniform(-kPointBiasRange, kPointBiasRange);
  }
  std::size_t fused_width = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const std::array<std::size_t, 2> pixel{kPixelInputWidth, dl[l]};
    p.pixel_encoders.push_back(numerics::init_mlp(pixel, kHidden, kHidden, rng));
    const std::array<std::size_t, 2> learner{dl[l], dl[l]};
    p.learners.push_back(numerics::init_mlp(learner, kHidden, kHidden, rng));
    fused_width += 2 * dl[l];
  }
  const std::array<std::size_t, 2> down{fused_width, D};
  p.downsampler = numerics::init_mlp(down, kHidden, kHidden, rng);
  p.attention = numerics::init_attention(D, config.heads, rng);
  p.class_embeddings = unit_rows(c, D, rng);
  const std::array<std::size_t, 2> branch{D, c};
  p.branch_classifier = numerics::init_mlp(branch, Activation::kNone, Activation::kNone, rng);
  for (std::size_t l = 0; l < L; ++l) {
    const std::array<std::size_t, 2> cls{dl[l], c};
    p.layer_classifiers.push_back(
        numerics::init_mlp(cls, Activation::kNone, Activation::kNone, rng));
  }
  return p;
}

void validate(const ModelParams& p, const ModelConfig& config) {
  config.validate();
  const std::size_t L = config.layers;
  const auto& dl = config.layer_widths;
  if (p.pixel_encoders.size() != L || p.learners.size() != L ||
      p.layer_classifiers.size() != L || p.point_encoder.layers.size() != L) {
    throw ShapeError("parameters describe a different layer count than L = " +
                     std::to_string(L));
  }
  numerics::validate(p.point_encoder);
  std::size_t in = kPointInputWidth;
  std::size_t fused_width = 0;
  for (std::size_t l = 0; l < L; ++l) {
    if (p.point_encoder.layers[l].weight.rows() != in ||
        p.point_encoder.layers[l].weight.cols() != dl[l]) {
      throw ShapeError("point encoder layer " + std::to_string(l) + " is " +
                       p.point_encoder.layers[l].weight.shape_string());
    }
    in = dl[l];
    expect_mlp(p.pixel_encoders[l], kPixelInputWidth, dl[l], "pixel encoder " + std::to_string(l));
    expect_mlp(p.learners[l], dl[l], dl[l], "learner " + std::to_string(l));
    expect_mlp(p.layer_classifiers[l], dl[l], config.classes,
               "layer classifier " + std::to_string(l));
    fused_width += 2 * dl[l];
  }
  expect_mlp(p.downsampler, fused_width, config.hidden, "downsampler");
  numerics::validate(p.attention, config.hidden);
  if (p.class_embeddings.rows() != config.classes ||
      p.class_embeddings.cols() != config.hidden) {
    throw ShapeError("class embeddings are " + p.class_embeddings.shape_string());
  }
  expect_mlp(p.branch_classifier, config.hidden, config.classes, "branch classifier");
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  ModelParams copy = params;
  for_each_tensor(copy, [&](const std::string&, Matrix& m) { n += m.size(); });
  return n;
}

ModelVars bind(Tape& t, const ModelParams& params, bool trainable) {
  return map_tensors(params, [&](const Matrix& m) {
    return trainable ? t.parameter(m) : t.constant(m);
  });
}

ModelParams gradients(const Tape& t, const ModelVars& vars) {
  return map_tensors(vars, [&](Var v) { return t.grad(v); });
}

Matrix point_inputs(const geometry::PointCloud& cloud) {
  Matrix m(cloud.size(), kPointInputWidth);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    m(i, 0) = kCoordinateScale * p.x;
    m(i, 1) = kCoordinateScale * p.y;
    m(i, 2) = kCoordinateScale * p.z;
    m(i, 3) = kIntensityScale * (p.intensity - 0.5);
  }
  return m;
}

std::vector<Matrix> pixel_inputs(const scenedata::RgbImage& image,
                                 std::span<const geometry::ProjectedPoint> projected,
                                 std::size_t layers) {
  const std::size_t w = static_cast<std::size_t>(image.width);
  const std::size_t h = static_cast<std::size_t>(image.height);
  // Summed-area table, (h+1) x (w+1) x 3.
  std::vector<double> sat((h + 1) * (w + 1) * 3, 0.0);
  auto at = [&](std::size_t y, std::size_t x, std::size_t ch) -> double& {
    return sat[(y * (w + 1) + x) * 3 + ch];
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::uint8_t* px = image.at(static_cast<int>(x), static_cast<int>(y));
      for (std::size_t ch = 0; ch < 3; ++ch) {
        at(y + 1, x + 1, ch) =
            px[ch] / 255.0 + at(y, x + 1, ch) + at(y + 1, x, ch) - at(y, x, ch);
      }
    }
  }

  std::vector<Matrix> out;
  out.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::int64_t r = (std::int64_t{1} << l) - 1;
    Matrix m(projected.size(), kPixelInputWidth);
    for (std::size_t i = 0; i < projected.size(); ++i) {
      const auto px = geometry::rasterize(projected[i]);
      const auto x0 = static_cast<std::size_t>(std::max<std::int64_t>(px.u - r, 0));
      const auto y0 = static_cast<std::size_t>(std::max<std::int64_t>(px.v - r, 0));
      const auto x1 = static_cast<std::size_t>(
          std::min<std::int64_t>(px.u + r + 1, static_cast<std::int64_t>(w)));
      const auto y1 = static_cast<std::size_t>(
          std::min<std::int64_t>(px.v + r + 1, static_cast<std::int64_t>(h)));
      const double area = static_cast<double>((x1 - x0) * (y1 - y0));
      for (std::size_t ch = 0; ch < 3; ++ch) {
        m(i, ch) = (at(y1, x1, ch) - at(y0, x1, ch) - at(y1, x0, ch) + at(y0, x0, ch)) / area;
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<std::size_t> fov_indices(std::span<const geometry::ProjectedPoint> projected) {
  std::vector<std::size_t> out;
  out.reserve(projected.size());
  for (const auto& p : projected) out.push_back(p.source_index);
  return out;
}

FeatureStack encode_toy(const geometry::PointCloud& cloud, const scenedata::RgbImage& image,
                        std::span<const geometry::ProjectedPoint> projected,
                        const ModelParams& params) {
  const std::size_t L = params.point_encoder.layers.size();
  if (params.pixel_encoders.size() != L) {
    throw ShapeError("point encoder has " + std::to_string(L) + " layers but there are " +
                     std::to_string(params.pixel_encoders.size()) + " pixel encoders");
  }
  FeatureStack stack;
  stack.features3d_full = numerics::mlp_forward_taps(params.point_encoder, point_inputs(cloud));
  const auto fov = fov_indices(projected);
  const auto pixels = pixel_inputs(image, projected, L);
  for (std::size_t l = 0; l < L; ++l) {
    stack.features3d_fov.push_back(numerics::gather_rows(stack.features3d_full[l], fov));
    stack.features2d.push_back(numerics::mlp_forward(params.pixel_encoders[l], pixels[l]));
  }
  return stack;
}

Matrix fuse_layer(const FeatureStack& stack, std::size_t layer, const MlpParams& learner) {
  if (layer >= stack.layers()) {
    throw ShapeError("layer " + std::to_string(layer) + " of a " +
                     std::to_string(stack.layers()) + "-layer stack");
  }
  const Matrix& f3d = stack.features3d_fov[layer];
  const Matrix& f2d = stack.features2d[layer];
  expect_mlp(learner, f3d.cols(), numerics::output_width(learner), "learner");
  const std::array parts{numerics::mlp_forward(learner, f3d), f2d};
  return numerics::concat_cols(parts);
}

Matrix fuse_multiscale(std::span<const Matrix> fused_layers, const MlpParams& downsampler) {
  const Matrix all = numerics::concat_cols(fused_layers);
  expect_width(all, numerics::input_width(downsampler), "fused features");
  return numerics::mlp_forward(downsampler, all);
}

BoxFeatureSet select_box_features(const Matrix& fused,
                                  std::span<const geometry::ProjectedPoint> projected,
                                  const geometry::BoundingBox2D& box,
                                  std::span<const int> point_labels) {
  if (fused.rows() != projected.size()) {
    throw ShapeError("fused features have " + std::to_string(fused.rows()) + " rows for " +
                     std::to_string(projected.size()) + " projected points");
  }
  BoxFeatureSet out;
  out.box = box;
  out.rows = geometry::projected_rows_in_box2d(projected, box);
  for (std::size_t r : out.rows) {
    const std::size_t src = projected[r].source_index;
    if (src >= point_labels.size()) throw ShapeError("point label list is too short");
    out.source_indices.push_back(src);
    out.labels.push_back(point_labels[src]);
  }
  out.features = numerics::gather_rows(fused, out.rows);
  if (out.rows.empty()) out.features = Matrix(0, fused.cols());
  return out;
}

Matrix msfskd_fuse(const Matrix& f2d, const Matrix& f2d3d, const MlpParams& mlp_a,
                   const MlpParams& mlp_b) {
  const Matrix gate = numerics::sigmoid(numerics::mlp_forward(mlp_a, f2d3d));
  const Matrix value = numerics::mlp_forward(mlp_b, f2d3d);
  if (!gate.same_shape(f2d) || !value.same_shape(f2d)) {
    throw ShapeError("gated fusion produces " + gate.shape_string() + " / " +
                     value.shape_string() + " for 2D features " + f2d.shape_string());
  }
  return numerics::add(f2d, numerics::hadamard(gate, value));
}

std::optional<Matrix> class_aware_attention(const BoxFeatureSet& bfs,
                                            const Matrix& class_embeddings,
                                            const numerics::AttentionParams& params,
                                            double epsilon) {
  if (bfs.empty()) return std::nullopt;
  const std::size_t classes = class_embeddings.rows();
  const Matrix e = numerics::gather_rows(class_embeddings, label_rows(bfs.labels, classes));
  const std::array box_label{bfs.box.class_id};
  const auto box_row = label_rows(box_label, classes).front();
  const Matrix e_box =
      numerics::gather_rows(class_embeddings, repeated_rows(box_row, bfs.labels.size()));
  const auto sim = numerics::cosine_similarity(e, e_box, epsilon);
  return numerics::multihead_attention(params, e, sim, bfs.features);
}

Matrix branch_predict(const Matrix& attended, const MlpParams& classifier) {
  expect_width(attended, numerics::input_width(classifier), "attended features");
  return numerics::softmax_rows(numerics::mlp_forward(classifier, attended));
}

Matrix predict_3d_layer(const FeatureStack& stack, std::size_t layer,
                        const MlpParams& classifier) {
  if (layer >= stack.layers()) {
    throw ShapeError("layer " + std::to_string(layer) + " of a " +
                     std::to_string(stack.layers()) + "-layer stack");
  }
  expect_width(stack.features3d_fov[layer], numerics::input_width(classifier), "3D features");
  return numerics::softmax_rows(numerics::mlp_forward(classifier, stack.features3d_fov[layer]));
}

namespace ad {

Var fuse_layer(Tape& t, Var features3d, Var features2d, const numerics::MlpT<Var>& learner) {
  const std::array parts{numerics::ad::mlp(t, learner, features3d), features2d};
  return numerics::ad::concat_cols(t, parts);
}

Var fuse_multiscale(Tape& t, std::span<const Var> fused_layers,
                    const numerics::MlpT<Var>& downsampler) {
  return numerics::ad::mlp(t, downsampler, numerics::ad::concat_cols(t, fused_layers));
}

Var msfskd_fuse(Tape& t, Var f2d, Var f2d3d, const numerics::MlpT<Var>& mlp_a,
                const numerics::MlpT<Var>& mlp_b) {
  using namespace numerics::ad;
  const Var gate = sigmoid(t, mlp(t, mlp_a, f2d3d));
  return add(t, f2d, hadamard(t, gate, mlp(t, mlp_b, f2d3d)));
}

Var class_aware_attention(Tape& t, Var features, std::span<const int> labels, int box_class,
                          Var class_embeddings, const numerics::AttentionT<Var>& params,
                          double epsilon) {
  using namespace numerics::ad;
  const std::size_t classes = t.value(class_embeddings).rows();
  const auto rows = label_rows(labels, classes);
  const std::array box_label{box_class};
  const auto box_row = label_rows(box_label, classes).front();
  const Var e = gather_rows(t, class_embeddings, rows);
  const Var e_box = gather_rows(t, class_embeddings, repeated_rows(box_row, labels.size()));
  const Var sim = cosine_similarity(t, e, e_box, epsilon);
  return multihead_attention(t, params, e, sim, features);
}

}  // namespace ad

}  // namespace boxprior::fusion
