#pragma once

// Losses, the taped training objective, SGD, evaluation and model files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "boxprior/fusion/config.hpp"
#include "boxprior/fusion/model.hpp"
#include "boxprior/numerics/gradcheck.hpp"
#include "boxprior/scenedata.hpp"

namespace boxprior::fusion {

struct LossReport {
  double seg_loss = 0.0;
  double distill_loss = 0.0;
  double total_loss = 0.0;  ///< seg_loss + lambda * distill_loss
  std::vector<double> per_class_iou;
  double miou = 0.0;

  friend bool operator==(const LossReport&, const LossReport&) = default;
};

/// Everything the losses need from one non-empty box.
struct BoxPrediction {
  Matrix logits;                    ///< object-branch logits, N_b x c
  std::vector<Matrix> layer_probs;  ///< per layer, 3D probabilities of the members
  std::vector<int> labels;
};

/// Segmentation loss (cross-entropy + Lovasz-softmax of the branch, mean
/// over boxes), box distillation (KL from the branch to every layer, mean
/// over boxes and layers) and their weighted total. Throws
/// LossUndefinedError for an empty list.
LossReport compute_losses(std::span<const BoxPrediction> boxes, double lambda);

/// Parameter-independent inputs of one scene, restricted to the projected
/// points that fall strictly inside at least one box.
struct SceneInputs {
  struct Box {
    int class_id = 0;
    std::vector<std::size_t> rows;  ///< rows of `points` inside the box
    std::vector<int> labels;
  };
  Matrix points;               ///< encoder input, M x 4
  std::vector<Matrix> pixels;  ///< per layer, M x 3
  std::vector<int> labels;     ///< per row
  std::vector<Box> boxes;      ///< empty boxes are dropped
};

SceneInputs prepare_scene(const scenedata::SceneBundle& scene, const ModelConfig& config);
std::vector<SceneInputs> prepare_scenes(std::span<const scenedata::SceneBundle> scenes,
                                        const ModelConfig& config);

struct Objective {
  Var seg;
  Var distill;
  Var total;
  /// Branch probabilities per box, in batch order.
  std::vector<Var> branch_probs;
  /// Per box, per layer: 3D probabilities of the box members.
  std::vector<std::vector<Var>> layer_probs;
};

/// Records the full forward pass over every box of `batch`. The distillation
/// teacher is the branch output behind a gradient stop, or, when
/// `frozen_teacher` is non-empty, those fixed matrices (one per box).
/// Throws LossUndefinedError when the batch has no non-empty box.
Objective build_objective(Tape& t, const ModelVars& vars, std::span<const SceneInputs> batch,
                          const ModelConfig& config, double lambda,
                          std::span<const Matrix> frozen_teacher = {});

/// Loss values without gradients.
LossReport forward_losses(const ModelParams& params, std::span<const SceneInputs> batch,
                          const ModelConfig& config, double lambda);

/// The same losses composed from the plain forward ops, without a tape.
LossReport reference_losses(const ModelParams& params, std::span<const SceneInputs> batch,
                            const ModelConfig& config, double lambda);

/// Loss values and gradients with respect to every tensor.
LossReport loss_and_gradients(const ModelParams& params, std::span<const SceneInputs> batch,
                              const ModelConfig& config, double lambda, ModelParams& grads);

/// One SGD step (no momentum). Returns the losses before the update.
LossReport train_step(ModelParams& params, std::span<const SceneInputs> batch,
                      const ModelConfig& config, double lambda, double learning_rate);

struct TrainResult {
  ModelParams params;
  std::vector<LossReport> curve;  ///< one entry per step
};

/// Initializes from the config seed and runs config.epochs passes over the
/// scenes in consecutive batches of config.batch_size.
TrainResult train(std::span<const SceneInputs> scenes, const TrainConfig& config);

/// Synthetic training and held-out scenes derived from one seed.
std::vector<scenedata::SceneBundle> training_scenes(std::uint64_t seed, std::size_t count,
                                                    const scenedata::GeneratorConfig& base = {});
scenedata::SceneBundle heldout_scene(std::uint64_t seed,
                                     const scenedata::GeneratorConfig& base = {});

/// Seed of the parameter initialization for a training seed.
std::uint64_t init_seed(std::uint64_t seed);

/// Small scenes that keep a full finite-difference sweep cheap.
scenedata::GeneratorConfig gradcheck_scene_config(std::uint64_t seed);

/// Central differences of the total loss over every parameter of a freshly
/// initialized model on one small scene, with the distillation teacher held
/// at its unperturbed value. Losses are evaluated in long double.
numerics::GradReport check_model_gradients(const ModelConfig& config, std::uint64_t seed,
                                           double lambda, double step);

// -------------------------------------------------------------- evaluation

/// TP / (TP + FP + FN) per class; 1 when a class never occurs in either.
std::vector<double> per_class_iou(std::span<const int> truth, std::span<const int> predicted,
                                  std::size_t classes);
/// Mean IoU over the classes present in `truth`.
double mean_iou(std::span<const double> iou, std::span<const int> truth);

/// Deepest-layer class prediction for every point of the cloud.
std::vector<int> predict_points(const scenedata::SceneBundle& scene, const ModelParams& params);

struct Evaluation {
  LossReport report;  ///< loss fields are zero when no box is visible
  std::size_t boxes = 0;
  double in_box_accuracy = 0.0;
  std::size_t in_box_points = 0;
};

/// IoU over every point with the deepest-layer classifier, losses over the
/// visible boxes, and accuracy on points inside at least one annotated 3D box.
Evaluation evaluate(std::span<const scenedata::SceneBundle> scenes, const ModelParams& params,
                    const ModelConfig& config, double lambda);

struct CompareRun {
  std::uint64_t seed = 0;
  double accuracy_with = 0.0;     ///< trained with the configured lambda
  double accuracy_without = 0.0;  ///< trained with lambda = 0
  /// Total loss of the configured-lambda run at its first and last step.
  double first_loss_with = 0.0;
  double last_loss_with = 0.0;
};

/// Trains both variants on the same scenes and initialization for seeds
/// config.seed, config.seed + 1, ... and measures held-out in-box accuracy.
std::vector<CompareRun> compare(const TrainConfig& config, std::size_t runs,
                                std::size_t scenes);

// ------------------------------------------------------------- model files

void save_model(const std::filesystem::path& path, const TrainConfig& config,
                const ModelParams& params);
std::string format_model(const TrainConfig& config, const ModelParams& params);

struct LoadedModel {
  TrainConfig config;
  ModelParams params;
};
LoadedModel load_model(const std::filesystem::path& path);
LoadedModel parse_model(std::string_view text, const std::string& file_name = "model");

}  // namespace boxprior::fusion
