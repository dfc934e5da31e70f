#include "boxprior/fusion/training.hpp"

#include <algorithm>
#include <array>

#include "boxprior/errors.hpp"
#include "boxprior/numerics/losses.hpp"
#include "boxprior/numerics/ops.hpp"
#include "boxprior/numerics/random.hpp"

namespace boxprior::fusion {
namespace {

namespace nad = numerics::ad;

constexpr std::uint64_t kHeldoutStream = 0x6e1d07u;
constexpr std::uint64_t kInitStream = 0x1417u;

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(m.rows(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

LossReport report_of(const Tape& t, const Objective& obj) {
  LossReport r;
  r.seg_loss = t.scalar(obj.seg);
  r.distill_loss = t.scalar(obj.distill);
  r.total_loss = t.scalar(obj.total);
  return r;
}

template <class T>
struct PlainScene {
  numerics::BasicMatrix<T> points;
  std::vector<numerics::BasicMatrix<T>> pixels;
  const SceneInputs* source = nullptr;
};

template <class T>
std::vector<PlainScene<T>> plain_scenes(std::span<const SceneInputs> batch) {
  std::vector<PlainScene<T>> out;
  for (const auto& s : batch) {
    PlainScene<T> p;
    p.points = s.points.cast<T>();
    for (const auto& px : s.pixels) p.pixels.push_back(px.cast<T>());
    p.source = &s;
    out.push_back(std::move(p));
  }
  return out;
}

template <class T>
struct PlainLosses {
  T seg = 0;
  T distill = 0;
  T total = 0;
};

/// The objective composed from plain forward ops in scalar type T. An empty
/// `teacher` distills from the branch output itself.
template <class T>
PlainLosses<T> plain_objective(const ModelParamsT<numerics::BasicMatrix<T>>& p,
                               std::span<const PlainScene<T>> batch, const ModelConfig& config,
                               T lambda, std::span<const numerics::BasicMatrix<T>> teacher) {
  using M = numerics::BasicMatrix<T>;
  using numerics::concat_cols;
  using numerics::gather_rows;
  using numerics::mlp_forward;
  using numerics::softmax_rows;
  PlainLosses<T> out;
  std::size_t boxes = 0;
  std::size_t terms = 0;
  for (const auto& scene : batch) {
    if (scene.source->boxes.empty()) continue;
    const auto f3d = numerics::mlp_forward_taps(p.point_encoder, scene.points);
    std::vector<M> fused_layers;
    for (std::size_t l = 0; l < config.layers; ++l) {
      const std::array parts{mlp_forward(p.learners[l], f3d[l]),
                             mlp_forward(p.pixel_encoders[l], scene.pixels[l])};
      fused_layers.push_back(concat_cols<T>(parts));
    }
    const M fused = mlp_forward(p.downsampler, concat_cols<T>(fused_layers));
    for (const auto& box : scene.source->boxes) {
      std::vector<std::size_t> label_rows(box.labels.begin(), box.labels.end());
      const std::vector<std::size_t> box_rows(box.labels.size(),
                                              static_cast<std::size_t>(box.class_id));
      const M e = gather_rows(p.class_embeddings, label_rows);
      const auto sim = numerics::cosine_similarity(e, gather_rows(p.class_embeddings, box_rows),
                                                   static_cast<T>(config.epsilon_cosine));
      const M attended =
          numerics::multihead_attention(p.attention, e, sim, gather_rows(fused, box.rows));
      const M logits = mlp_forward(p.branch_classifier, attended);
      const M probs = softmax_rows(logits);
      out.seg += numerics::cross_entropy(logits, box.labels) +
                 numerics::lovasz_softmax(probs, box.labels);
      const M& target = teacher.empty() ? probs : teacher[boxes];
      for (std::size_t l = 0; l < config.layers; ++l) {
        const M student =
            softmax_rows(mlp_forward(p.layer_classifiers[l], gather_rows(f3d[l], box.rows)));
        out.distill += numerics::kl_divergence(target, student);
        ++terms;
      }
      ++boxes;
    }
  }
  if (boxes == 0) throw LossUndefinedError("no annotated box with projected points");
  out.seg /= static_cast<T>(boxes);
  out.distill /= static_cast<T>(terms);
  out.total = out.seg + lambda * out.distill;
  return out;
}

/// The plain objective in long double with every intermediate cached, so
/// that perturbing one tensor only recomputes what depends on it. The
/// distillation teacher is fixed.
class StagedWideLoss {
 public:
  using W = long double;
  using M = numerics::WideMatrix;

  StagedWideLoss(const ModelParams& params, std::span<const SceneInputs> batch,
                 const ModelConfig& config, double lambda, std::span<const Matrix> teacher)
      : p_(map_tensors(params, [](const Matrix& m) { return m.cast<W>(); })),
        base_(p_),
        config_(config),
        lambda_(lambda),
        scenes_(plain_scenes<W>(batch)) {
    for_each_tensor(p_, [&](const std::string& name, M& m) {
      tensors_.push_back(&m);
      stages_.push_back(stage_of(name));
    });
    for_each_tensor(base_, [&](const std::string&, M& m) { base_tensors_.push_back(&m); });
    for (const auto& m : teacher) teacher_.push_back(m.cast<W>());
    std::size_t box = 0;
    for (auto& s : scenes_) {
      if (s.source->boxes.empty()) continue;
      Cache c;
      c.scene = &s;
      c.first_box = box;
      box += s.source->boxes.size();
      c.boxes.resize(s.source->boxes.size());
      c.kl.assign(s.source->boxes.size() * config_.layers, 0);
      caches_.push_back(std::move(c));
    }
    if (caches_.empty()) throw LossUndefinedError("no annotated box with projected points");
    if (teacher_.size() != box) throw ShapeError("frozen teacher does not match the boxes");
    boxes_ = box;
    for (auto& c : caches_) run(c, {Kind::kPoint, 0}, kNoColumn);
  }

  /// Loss with tensor `index` replaced by `value`; the cache is untouched.
  long double evaluate(std::size_t index, const Matrix& value) {
    M& live = *tensors_[index];
    for (std::size_t i = 0; i < value.size(); ++i) live[i] = value[i];
    const Stage stage = stages_[index];
    std::size_t column = kNoColumn;
    if (stage.kind == Kind::kDownsample && p_.downsampler.layers.size() == 1) {
      column = changed_column(live, *base_tensors_[index]);
    }
    W seg = 0;
    W kl = 0;
    for (const auto& c : caches_) {
      Cache scratch = c;
      run(scratch, stage, column);
      for (const auto& b : scratch.boxes) seg += b.seg;
      for (W v : scratch.kl) kl += v;
    }
    return total(seg, kl);
  }

  void restore(std::size_t index) { *tensors_[index] = *base_tensors_[index]; }

 private:
  static constexpr std::size_t kNoColumn = static_cast<std::size_t>(-1);

  enum class Kind {
    kPoint,
    kFusedLayer,
    kDownsample,
    kAttentionWeights,  // embeddings, query and key projections
    kValue,             // value projections and the branch classifier
    kLayerClassifier,
  };
  struct Stage {
    Kind kind;
    std::size_t layer;
  };
  struct BoxCache {
    std::vector<M> weights;  ///< per head
    W seg = 0;
  };
  struct Cache {
    const PlainScene<W>* scene = nullptr;
    std::size_t first_box = 0;
    std::vector<M> f3d;
    std::vector<M> fused_layers;
    M fused_input;
    M fused;
    std::vector<BoxCache> boxes;
    std::vector<W> kl;  ///< box-major, then layer
  };

  static Stage stage_of(const std::string& name) {
    auto layer_after = [&](std::string_view prefix) {
      return static_cast<std::size_t>(std::stoul(name.substr(prefix.size())));
    };
    if (name.starts_with("point_encoder")) return {Kind::kPoint, 0};
    if (name.starts_with("pixel_encoder")) return {Kind::kFusedLayer, layer_after("pixel_encoder")};
    if (name.starts_with("learner")) return {Kind::kFusedLayer, layer_after("learner")};
    if (name.starts_with("downsampler")) return {Kind::kDownsample, 0};
    if (name.starts_with("layer_classifier")) {
      return {Kind::kLayerClassifier, layer_after("layer_classifier")};
    }
    if (name.starts_with("branch_classifier") || name.ends_with(".value")) {
      return {Kind::kValue, 0};
    }
    return {Kind::kAttentionWeights, 0};
  }

  // Output column touched by a single-entry change of a dense weight or
  // bias, or kNoColumn.
  static std::size_t changed_column(const M& live, const M& base) {
    std::size_t column = kNoColumn;
    for (std::size_t i = 0; i < live.size(); ++i) {
      if (live[i] == base[i]) continue;
      if (column != kNoColumn) return kNoColumn;
      column = i % live.cols();
    }
    return column;
  }

  long double total(W seg, W kl) const {
    const W terms = static_cast<W>(boxes_ * config_.layers);
    return seg / static_cast<W>(boxes_) + static_cast<W>(lambda_) * (kl / terms);
  }

  void downsample_column(Cache& c, std::size_t j) const {
    const auto& layer = p_.downsampler.layers.front();
    if (layer.activation != numerics::Activation::kTanh) {
      throw InvalidArgument("column update assumes a tanh downsampler");
    }
    const M& x = c.fused_input;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      W acc = 0;
      for (std::size_t k = 0; k < x.cols(); ++k) acc += x(r, k) * layer.weight(k, j);
      c.fused(r, j) = std::tanh(acc + layer.bias[j]);
    }
  }

  // Recomputes everything in `c` downstream of `stage`.
  void run(Cache& c, Stage stage, std::size_t column) const {
    using numerics::concat_cols;
    using numerics::gather_rows;
    using numerics::matmul;
    using numerics::mlp_forward;
    using numerics::softmax_rows;
    const PlainScene<W>& scene = *c.scene;
    const auto& boxes = scene.source->boxes;
    const std::size_t L = config_.layers;
    const Kind kind = stage.kind;
    const bool all = kind == Kind::kPoint;

    if (all) c.f3d = numerics::mlp_forward_taps(p_.point_encoder, scene.points);
    if (all || kind == Kind::kFusedLayer) {
      if (all) c.fused_layers.assign(L, M());
      for (std::size_t l = 0; l < L; ++l) {
        if (!all && l != stage.layer) continue;
        const std::array parts{mlp_forward(p_.learners[l], c.f3d[l]),
                               mlp_forward(p_.pixel_encoders[l], scene.pixels[l])};
        c.fused_layers[l] = concat_cols<W>(parts);
      }
      c.fused_input = concat_cols<W>(c.fused_layers);
    }
    if (all || kind == Kind::kFusedLayer || kind == Kind::kDownsample) {
      if (column != kNoColumn) {
        downsample_column(c, column);
      } else {
        c.fused = mlp_forward(p_.downsampler, c.fused_input);
      }
    }
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      const auto& box = boxes[b];
      BoxCache& bc = c.boxes[b];
      if (all || kind == Kind::kAttentionWeights) {
        std::vector<std::size_t> label_rows(box.labels.begin(), box.labels.end());
        const std::vector<std::size_t> box_rows(box.labels.size(),
                                                static_cast<std::size_t>(box.class_id));
        const M e = gather_rows(p_.class_embeddings, label_rows);
        const auto sim = numerics::cosine_similarity(
            e, gather_rows(p_.class_embeddings, box_rows), static_cast<W>(config_.epsilon_cosine));
        bc.weights = numerics::attention_weights(p_.attention, e, sim);
      }
      if (kind != Kind::kLayerClassifier) {
        const M members = gather_rows(c.fused, box.rows);
        std::vector<M> heads;
        for (std::size_t h = 0; h < p_.attention.heads; ++h) {
          heads.push_back(matmul(bc.weights[h], matmul(members, p_.attention.value[h])));
        }
        const M logits = mlp_forward(p_.branch_classifier, concat_cols<W>(heads));
        bc.seg = numerics::cross_entropy(logits, box.labels) +
                 numerics::lovasz_softmax(softmax_rows(logits), box.labels);
      }
      if (all || kind == Kind::kLayerClassifier) {
        for (std::size_t l = 0; l < L; ++l) {
          if (!all && l != stage.layer) continue;
          const M student = softmax_rows(
              mlp_forward(p_.layer_classifiers[l], gather_rows(c.f3d[l], box.rows)));
          c.kl[b * L + l] = numerics::kl_divergence(teacher_[c.first_box + b], student);
        }
      }
    }
  }

  ModelParamsT<M> p_;
  ModelParamsT<M> base_;
  ModelConfig config_;
  double lambda_;
  std::vector<PlainScene<W>> scenes_;
  std::vector<M> teacher_;
  std::vector<M*> tensors_;
  std::vector<M*> base_tensors_;
  std::vector<Stage> stages_;
  std::vector<Cache> caches_;
  std::size_t boxes_ = 0;
};

}  // namespace

LossReport compute_losses(std::span<const BoxPrediction> boxes, double lambda) {
  if (boxes.empty()) throw LossUndefinedError("no annotated box with projected points");
  double seg = 0.0;
  double distill = 0.0;
  std::size_t terms = 0;
  for (const auto& box : boxes) {
    const Matrix probs = numerics::softmax_rows(box.logits);
    seg += numerics::cross_entropy(box.logits, box.labels) +
           numerics::lovasz_softmax(probs, box.labels);
    for (const Matrix& layer : box.layer_probs) {
      distill += numerics::kl_divergence(probs, layer);
      ++terms;
    }
  }
  LossReport r;
  r.seg_loss = seg / static_cast<double>(boxes.size());
  r.distill_loss = terms > 0 ? distill / static_cast<double>(terms) : 0.0;
  r.total_loss = r.seg_loss + lambda * r.distill_loss;
  return r;
}

SceneInputs prepare_scene(const scenedata::SceneBundle& scene, const ModelConfig& config) {
  const auto projected = geometry::project_points(scene.cloud, scene.calibration.intrinsics,
                                                  scene.extrinsic(), scene.plane());
  std::vector<int> fov_labels;
  fov_labels.reserve(projected.size());
  for (const auto& p : projected) {
    const int label = scene.labels.at(p.source_index);
    if (label < 0 || static_cast<std::size_t>(label) >= config.classes) {
      throw LabelError("point label " + std::to_string(label) + " outside [0, " +
                       std::to_string(config.classes) + ")");
    }
    fov_labels.push_back(label);
  }

  // Only points inside some box reach the losses; everything else is dropped
  // and box rows are renumbered into the kept set.
  constexpr std::size_t kUnused = static_cast<std::size_t>(-1);
  std::vector<std::size_t> compact(projected.size(), kUnused);
  std::vector<std::size_t> kept;
  SceneInputs in;
  for (const auto& box : scene.boxes2d) {
    SceneInputs::Box b;
    b.class_id = box.class_id;
    b.rows = geometry::projected_rows_in_box2d(projected, box);
    if (b.rows.empty()) continue;
    for (std::size_t& r : b.rows) {
      b.labels.push_back(fov_labels[r]);
      if (compact[r] == kUnused) {
        compact[r] = kept.size();
        kept.push_back(r);
      }
      r = compact[r];
    }
    in.boxes.push_back(std::move(b));
  }

  std::vector<std::size_t> sources;
  sources.reserve(kept.size());
  for (std::size_t r : kept) {
    sources.push_back(projected[r].source_index);
    in.labels.push_back(fov_labels[r]);
  }
  in.points = kept.empty() ? Matrix(0, 4) : numerics::gather_rows(point_inputs(scene.cloud), sources);
  for (const Matrix& px : pixel_inputs(scene.image, projected, config.layers)) {
    in.pixels.push_back(kept.empty() ? Matrix(0, 3) : numerics::gather_rows(px, kept));
  }
  return in;
}

std::vector<SceneInputs> prepare_scenes(std::span<const scenedata::SceneBundle> scenes,
                                        const ModelConfig& config) {
  std::vector<SceneInputs> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(prepare_scene(s, config));
  return out;
}

Objective build_objective(Tape& t, const ModelVars& vars, std::span<const SceneInputs> batch,
                          const ModelConfig& config, double lambda,
                          std::span<const Matrix> frozen_teacher) {
  const std::size_t L = config.layers;
  std::vector<Var> seg_terms;
  std::vector<Var> kl_terms;
  Objective obj;
  for (const SceneInputs& scene : batch) {
    if (scene.boxes.empty()) continue;
    const Var points = t.constant(scene.points);
    const auto f3d = nad::mlp_taps(t, vars.point_encoder, points);
    std::vector<Var> fused_layers;
    for (std::size_t l = 0; l < L; ++l) {
      const Var f2d = nad::mlp(t, vars.pixel_encoders[l], t.constant(scene.pixels[l]));
      fused_layers.push_back(ad::fuse_layer(t, f3d[l], f2d, vars.learners[l]));
    }
    const Var fused = ad::fuse_multiscale(t, fused_layers, vars.downsampler);

    for (const auto& box : scene.boxes) {
      const Var members = nad::gather_rows(t, fused, box.rows);
      const Var attended = ad::class_aware_attention(t, members, box.labels, box.class_id,
                                                     vars.class_embeddings, vars.attention,
                                                     config.epsilon_cosine);
      const Var logits = nad::mlp(t, vars.branch_classifier, attended);
      const Var probs = nad::softmax_rows(t, logits);
      seg_terms.push_back(nad::add(t, nad::cross_entropy(t, logits, box.labels),
                                   nad::lovasz_softmax(t, probs, box.labels)));

      const std::size_t index = obj.branch_probs.size();
      Var teacher;
      if (frozen_teacher.empty()) {
        teacher = nad::stop_gradient(t, probs);
      } else {
        if (index >= frozen_teacher.size()) {
          throw ShapeError("frozen teacher lists " + std::to_string(frozen_teacher.size()) +
                           " boxes");
        }
        teacher = t.constant(frozen_teacher[index]);
      }
      std::vector<Var> layers;
      for (std::size_t l = 0; l < L; ++l) {
        const Var feats = nad::gather_rows(t, f3d[l], box.rows);
        const Var student =
            nad::softmax_rows(t, nad::mlp(t, vars.layer_classifiers[l], feats));
        kl_terms.push_back(nad::kl_divergence(t, teacher, student));
        layers.push_back(student);
      }
      obj.branch_probs.push_back(probs);
      obj.layer_probs.push_back(std::move(layers));
    }
  }
  if (seg_terms.empty()) throw LossUndefinedError("no annotated box with projected points");
  if (!frozen_teacher.empty() && frozen_teacher.size() != seg_terms.size()) {
    throw ShapeError("frozen teacher lists " + std::to_string(frozen_teacher.size()) +
                     " boxes, batch has " + std::to_string(seg_terms.size()));
  }

  const std::vector<double> seg_w(seg_terms.size(), 1.0 / static_cast<double>(seg_terms.size()));
  const std::vector<double> kl_w(kl_terms.size(), 1.0 / static_cast<double>(kl_terms.size()));
  obj.seg = nad::weighted_sum(t, seg_terms, seg_w);
  obj.distill = nad::weighted_sum(t, kl_terms, kl_w);
  const std::array parts{obj.seg, obj.distill};
  const std::array<double, 2> weights{1.0, lambda};
  obj.total = nad::weighted_sum(t, parts, weights);
  return obj;
}

LossReport forward_losses(const ModelParams& params, std::span<const SceneInputs> batch,
                          const ModelConfig& config, double lambda) {
  Tape t;
  const ModelVars vars = bind(t, params, false);
  return report_of(t, build_objective(t, vars, batch, config, lambda));
}

LossReport reference_losses(const ModelParams& params, std::span<const SceneInputs> batch,
                            const ModelConfig& config, double lambda) {
  const auto scenes = plain_scenes<double>(batch);
  const auto l = plain_objective<double>(params, scenes, config, lambda, {});
  LossReport r;
  r.seg_loss = l.seg;
  r.distill_loss = l.distill;
  r.total_loss = l.total;
  return r;
}

LossReport loss_and_gradients(const ModelParams& params, std::span<const SceneInputs> batch,
                              const ModelConfig& config, double lambda, ModelParams& grads) {
  Tape t;
  const ModelVars vars = bind(t, params);
  const Objective obj = build_objective(t, vars, batch, config, lambda);
  t.backward(obj.total);
  grads = gradients(t, vars);
  return report_of(t, obj);
}

LossReport train_step(ModelParams& params, std::span<const SceneInputs> batch,
                      const ModelConfig& config, double lambda, double learning_rate) {
  ModelParams grads;
  const LossReport report = loss_and_gradients(params, batch, config, lambda, grads);
  std::vector<Matrix*> grad_tensors;
  for_each_tensor(grads, [&](const std::string&, Matrix& g) { grad_tensors.push_back(&g); });
  std::size_t i = 0;
  for_each_tensor(params, [&](const std::string&, Matrix& p) {
    const Matrix& g = *grad_tensors[i++];
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= learning_rate * g[k];
  });
  return report;
}

TrainResult train(std::span<const SceneInputs> scenes, const TrainConfig& config) {
  config.validate();
  if (scenes.empty()) throw InvalidArgument("no training scenes");
  TrainResult result;
  result.params = init_model(config.model, init_seed(config.seed));
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t first = 0; first < scenes.size(); first += batch) {
      const auto part = scenes.subspan(first, std::min(batch, scenes.size() - first));
      result.curve.push_back(
          train_step(result.params, part, config.model, config.lambda, config.learning_rate));
    }
  }
  return result;
}

std::vector<scenedata::SceneBundle> training_scenes(std::uint64_t seed, std::size_t count,
                                                    const scenedata::GeneratorConfig& base) {
  std::vector<scenedata::SceneBundle> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    scenedata::GeneratorConfig cfg = base;
    cfg.seed = numerics::mix_seed(seed, i);
    out.push_back(scenedata::generate_scene(cfg));
  }
  return out;
}

scenedata::SceneBundle heldout_scene(std::uint64_t seed, const scenedata::GeneratorConfig& base) {
  scenedata::GeneratorConfig cfg = base;
  cfg.seed = numerics::mix_seed(seed, kHeldoutStream);
  return scenedata::generate_scene(cfg);
}

std::uint64_t init_seed(std::uint64_t seed) { return numerics::mix_seed(seed, kInitStream); }

scenedata::GeneratorConfig gradcheck_scene_config(std::uint64_t seed) {
  scenedata::GeneratorConfig cfg;
  cfg.seed = seed;
  cfg.objects = 2;
  cfg.min_points_per_object = 8;
  cfg.max_points_per_object = 12;
  cfg.background_points = 40;
  cfg.image_width = 64;
  cfg.image_height = 48;
  return cfg;
}

numerics::GradReport check_model_gradients(const ModelConfig& config, std::uint64_t seed,
                                           double lambda, double step) {
  scenedata::GeneratorConfig gen = gradcheck_scene_config(seed);
  gen.classes = static_cast<int>(config.classes);
  const std::array scenes{prepare_scene(scenedata::generate_scene(gen), config)};
  ModelParams params = init_model(config, init_seed(seed));

  ModelParams grads;
  std::vector<Matrix> teacher;
  {
    Tape t;
    const ModelVars vars = bind(t, params);
    const Objective obj = build_objective(t, vars, scenes, config, lambda);
    t.backward(obj.total);
    grads = gradients(t, vars);
    for (Var p : obj.branch_probs) teacher.push_back(t.value(p));
  }

  StagedWideLoss staged(params, scenes, config, lambda, teacher);
  std::vector<const Matrix*> analytic;
  for_each_tensor(grads, [&](const std::string&, Matrix& g) { analytic.push_back(&g); });
  numerics::GradReport report;
  std::size_t index = 0;
  for_each_tensor(params, [&](const std::string& name, Matrix& m) {
    const numerics::CheckedTensor tensor{name, &m, analytic[index]};
    const auto loss = [&] { return staged.evaluate(index, m); };
    auto part = numerics::grad_check(loss, std::span(&tensor, 1), step);
    staged.restore(index);
    report.coordinates += part.coordinates;
    for (auto& e : part.tensors) report.tensors.push_back(std::move(e));
    ++index;
  });
  return report;
}

std::vector<double> per_class_iou(std::span<const int> truth, std::span<const int> predicted,
                                  std::size_t classes) {
  if (truth.size() != predicted.size()) {
    throw ShapeError(std::to_string(truth.size()) + " labels but " +
                     std::to_string(predicted.size()) + " predictions");
  }
  numerics::check_labels(truth, truth.size(), classes);
  numerics::check_labels(predicted, predicted.size(), classes);
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    if (t == p) {
      ++tp[t];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  std::vector<double> iou(classes, 1.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t denom = tp[c] + fp[c] + fn[c];
    if (denom > 0) iou[c] = static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return iou;
}

double mean_iou(std::span<const double> iou, std::span<const int> truth) {
  std::vector<bool> present(iou.size(), false);
  for (int t : truth) {
    if (t >= 0 && static_cast<std::size_t>(t) < iou.size()) present[t] = true;
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < iou.size(); ++c) {
    if (!present[c]) continue;
    sum += iou[c];
    ++n;
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

std::vector<int> predict_points(const scenedata::SceneBundle& scene, const ModelParams& params) {
  if (params.layer_classifiers.empty()) throw ShapeError("model has no layer classifier");
  const auto taps = numerics::mlp_forward_taps(params.point_encoder, point_inputs(scene.cloud));
  const Matrix logits = numerics::mlp_forward(params.layer_classifiers.back(), taps.back());
  return argmax_rows(logits);
}

Evaluation evaluate(std::span<const scenedata::SceneBundle> scenes, const ModelParams& params,
                    const ModelConfig& config, double lambda) {
  validate(params, config);
  Evaluation ev;
  std::vector<int> truth;
  std::vector<int> predicted;
  std::size_t correct = 0;
  for (const auto& scene : scenes) {
    const auto pred = predict_points(scene, params);
    truth.insert(truth.end(), scene.labels.begin(), scene.labels.end());
    predicted.insert(predicted.end(), pred.begin(), pred.end());

    for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
      const auto& point = scene.cloud.points[i];
      const bool inside = std::any_of(scene.boxes3d.begin(), scene.boxes3d.end(),
                                      [&](const auto& box) { return geometry::box3d_contains(box, point); });
      if (!inside) continue;
      ++ev.in_box_points;
      if (pred[i] == scene.labels[i]) ++correct;
    }
  }
  ev.report.per_class_iou = per_class_iou(truth, predicted, config.classes);
  ev.report.miou = mean_iou(ev.report.per_class_iou, truth);
  ev.in_box_accuracy = ev.in_box_points > 0
                           ? static_cast<double>(correct) / static_cast<double>(ev.in_box_points)
                           : 0.0;

  const auto inputs = prepare_scenes(scenes, config);
  for (const auto& in : inputs) ev.boxes += in.boxes.size();
  if (ev.boxes > 0) {
    const LossReport losses = forward_losses(params, inputs, config, lambda);
    ev.report.seg_loss = losses.seg_loss;
    ev.report.distill_loss = losses.distill_loss;
    ev.report.total_loss = losses.total_loss;
  }
  return ev;
}

std::vector<CompareRun> compare(const TrainConfig& config, std::size_t runs,
                                std::size_t scenes) {
  std::vector<CompareRun> out;
  for (std::size_t i = 0; i < runs; ++i) {
    TrainConfig with = config;
    with.seed = config.seed + i;
    TrainConfig without = with;
    without.lambda = 0.0;
    const auto train_set = training_scenes(with.seed, scenes);
    const auto inputs = prepare_scenes(train_set, config.model);
    const std::array heldout{heldout_scene(with.seed)};

    CompareRun run;
    run.seed = with.seed;
    const TrainResult trained = train(inputs, with);
    run.first_loss_with = trained.curve.front().total_loss;
    run.last_loss_with = trained.curve.back().total_loss;
    run.accuracy_with =
        evaluate(heldout, trained.params, config.model, with.lambda).in_box_accuracy;
    run.accuracy_without =
        evaluate(heldout, train(inputs, without).params, config.model, 0.0).in_box_accuracy;
    out.push_back(run);
  }
  return out;
}

}  // namespace boxprior::fusion
