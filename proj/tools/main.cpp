#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "boxprior/errors.hpp"
#include "boxprior/fusion/training.hpp"
#include "boxprior/geometry.hpp"
#include "boxprior/scenedata.hpp"

namespace fs = std::filesystem;
using namespace boxprior;

namespace {

constexpr int kUsageError = 2;
constexpr int kDomainError = 1;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-5;

/// 6 significant digits for human-facing summaries.
std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string scene_dir_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%03zu", i);
  return buf;
}

std::string projection_csv(const scenedata::SceneBundle& scene) {
  const auto projected = geometry::project_points(scene.cloud, scene.calibration.intrinsics,
                                                  scene.extrinsic(), scene.plane());
  std::string out = "index,u_f,v_f,depth,pixel_u,pixel_v\n";
  for (const auto& p : projected) {
    const auto px = geometry::rasterize(p);
    out += std::to_string(p.source_index) + ',' + geometry::format_double(p.u) + ',' +
           geometry::format_double(p.v) + ',' + geometry::format_double(p.depth) + ',' +
           std::to_string(px.u) + ',' + std::to_string(px.v) + '\n';
  }
  return out;
}

std::string boxes_csv(const scenedata::SceneBundle& scene) {
  std::string out = "class_id,x1,y1,x2,y2\n";
  for (const auto& b : scene.boxes2d) {
    out += std::to_string(b.class_id) + ',' + geometry::format_double(b.x1) + ',' +
           geometry::format_double(b.y1) + ',' + geometry::format_double(b.x2) + ',' +
           geometry::format_double(b.y2) + '\n';
  }
  return out;
}

std::string loss_curve_csv(const std::vector<fusion::LossReport>& curve) {
  std::string out = "step,seg_loss,distill_loss,total_loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out += std::to_string(i + 1) + ',' + geometry::format_double(curve[i].seg_loss) + ',' +
           geometry::format_double(curve[i].distill_loss) + ',' +
           geometry::format_double(curve[i].total_loss) + '\n';
  }
  return out;
}

struct Options {
  std::uint64_t seed = 7;
  bool seed_given = false;
  std::size_t scenes = 8;
  std::string out;
  std::string scene;
  std::string config;
  std::string model;
  std::optional<double> lambda;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::size_t runs = 10;
};

fusion::TrainConfig resolve_config(const Options& o) {
  fusion::TrainConfig cfg = o.config.empty() ? fusion::TrainConfig{}
                                             : fusion::load_train_config(o.config);
  if (o.seed_given) cfg.seed = o.seed;
  if (o.lambda) cfg.lambda = *o.lambda;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.lr) cfg.learning_rate = *o.lr;
  cfg.validate();
  return cfg;
}

int run_gen(const Options& o) {
  scenedata::GeneratorConfig base;
  const auto scenes = fusion::training_scenes(o.seed, o.scenes, base);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    scenedata::write_scene(scenes[i], fs::path(o.out) / scene_dir_name(i));
  }
  std::cout << "wrote " << scenes.size() << " scenes to " << o.out << "\n";
  return 0;
}

int run_project(const Options& o) {
  const auto scene = scenedata::read_scene(o.scene);
  const std::string csv = projection_csv(scene);
  write_text(o.out, csv);
  const auto rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1;
  std::cout << "projected " << rows << " of " << scene.cloud.size() << " points\n";
  return 0;
}

int run_boxes(const Options& o) {
  const auto scene = scenedata::read_scene(o.scene);
  write_text(o.out, boxes_csv(scene));
  std::cout << scene.boxes2d.size() << " of " << scene.boxes3d.size()
            << " boxes are visible\n";
  return 0;
}

int run_gradcheck(const Options& o) {
  const fusion::TrainConfig cfg = resolve_config(o);
  const auto report = fusion::check_model_gradients(cfg.model, cfg.seed, cfg.lambda, kGradStep);
  const auto* worst = report.worst();
  std::cout << "checked " << report.coordinates << " coordinates in " << report.tensors.size()
            << " tensors\n";
  if (worst != nullptr) {
    std::cout << "max relative error " << g6(report.max_relative_error()) << " (" << worst->name
              << ", analytic " << g6(worst->analytic) << ", numeric " << g6(worst->numeric)
              << ")\n";
  }
  const bool ok = report.max_relative_error() < kGradTolerance;
  std::cout << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : kDomainError;
}

int run_train(const Options& o) {
  const fusion::TrainConfig cfg = resolve_config(o);
  const auto scenes = fusion::training_scenes(cfg.seed, o.scenes);
  const auto inputs = fusion::prepare_scenes(scenes, cfg.model);
  const auto result = fusion::train(inputs, cfg);
  const fs::path out(o.out);
  write_text(out / "loss_curve.csv", loss_curve_csv(result.curve));
  fusion::save_model(out / "model.txt", cfg, result.params);
  if (!result.curve.empty()) {
    const auto& first = result.curve.front();
    const auto& last = result.curve.back();
    std::cout << "steps " << result.curve.size() << "\n"
              << "total_loss " << g6(first.total_loss) << " -> " << g6(last.total_loss) << "\n"
              << "seg_loss " << g6(last.seg_loss) << "\n"
              << "distill_loss " << g6(last.distill_loss) << "\n";
  }
  const std::array heldout{fusion::heldout_scene(cfg.seed)};
  const auto ev = fusion::evaluate(heldout, result.params, cfg.model, cfg.lambda);
  std::cout << "heldout in_box_accuracy " << g6(ev.in_box_accuracy) << "\n"
            << "heldout miou " << g6(ev.report.miou) << "\n";
  return 0;
}

int run_eval(const Options& o) {
  const auto model = fusion::load_model(o.model);
  const double lambda = o.lambda.value_or(model.config.lambda);
  const std::array scenes{scenedata::read_scene(o.scene)};
  const auto ev = fusion::evaluate(scenes, model.params, model.config.model, lambda);
  for (std::size_t c = 0; c < ev.report.per_class_iou.size(); ++c) {
    std::cout << "iou[" << c << "] " << g6(ev.report.per_class_iou[c]) << "\n";
  }
  std::cout << "miou " << g6(ev.report.miou) << "\n"
            << "in_box_accuracy " << g6(ev.in_box_accuracy) << " (" << ev.in_box_points
            << " points)\n";
  if (ev.boxes > 0) {
    std::cout << "seg_loss " << g6(ev.report.seg_loss) << "\n"
              << "distill_loss " << g6(ev.report.distill_loss) << "\n"
              << "total_loss " << g6(ev.report.total_loss) << "\n";
  }
  return 0;
}

int run_compare(const Options& o) {
  const fusion::TrainConfig cfg = resolve_config(o);
  const auto runs = fusion::compare(cfg, o.runs, o.scenes);
  std::string csv = "seed,accuracy_lambda,accuracy_zero\n";
  std::size_t wins = 0;
  for (const auto& r : runs) {
    csv += std::to_string(r.seed) + ',' + geometry::format_double(r.accuracy_with) + ',' +
           geometry::format_double(r.accuracy_without) + '\n';
    std::cout << "seed " << r.seed << "  lambda=" << g6(cfg.lambda) << " "
              << g6(r.accuracy_with) << "  lambda=0 " << g6(r.accuracy_without)
              << "  delta " << g6(r.accuracy_with - r.accuracy_without) << "\n";
    if (r.accuracy_with >= r.accuracy_without) ++wins;
  }
  std::cout << "lambda=" << g6(cfg.lambda) << " >= lambda=0 in " << wins << " of "
            << runs.size() << " runs\n";
  if (!o.out.empty()) write_text(o.out, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR-camera box-prior fusion toolkit"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", o.seed, "random seed")->each([&](const std::string&) {
      o.seed_given = true;
    });
  };
  auto add_training = [&](CLI::App* cmd) {
    add_seed(cmd);
    cmd->add_option("--config", o.config, "training configuration file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--lambda", o.lambda, "distillation weight (default 0.1)");
    cmd->add_option("--epochs", o.epochs, "passes over the training scenes");
    cmd->add_option("--lr", o.lr, "SGD learning rate");
  };

  auto* gen = app.add_subcommand("gen", "generate synthetic scene directories");
  add_seed(gen);
  gen->add_option("--scenes", o.scenes, "number of scenes")->check(CLI::PositiveNumber);
  gen->add_option("--out", o.out, "output directory")->required();

  auto* project = app.add_subcommand("project", "project a scene's points into its image");
  project->add_option("--scene", o.scene, "scene directory")->required();
  project->add_option("--out", o.out, "output CSV")->required();

  auto* boxes = app.add_subcommand("boxes", "derive 2D boxes from a scene's 3D boxes");
  boxes->add_option("--scene", o.scene, "scene directory")->required();
  boxes->add_option("--out", o.out, "output CSV")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full loss");
  add_training(gradcheck);

  auto* train = app.add_subcommand("train", "train on synthetic scenes");
  add_training(train);
  train->add_option("--scenes", o.scenes, "number of training scenes")
      ->check(CLI::PositiveNumber);
  train->add_option("--out", o.out, "output directory (loss_curve.csv, model.txt)")
      ->required();

  auto* eval = app.add_subcommand("eval", "evaluate a trained model on a scene");
  eval->add_option("--scene", o.scene, "scene directory")->required();
  eval->add_option("--model", o.model, "model file written by train")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--lambda", o.lambda, "distillation weight for the reported loss");

  auto* cmp = app.add_subcommand("compare", "held-out accuracy with and without distillation");
  add_training(cmp);
  cmp->add_option("--scenes", o.scenes, "training scenes per run")->check(CLI::PositiveNumber);
  cmp->add_option("--runs", o.runs, "number of seeds")->check(CLI::PositiveNumber);
  cmp->add_option("--out", o.out, "optional CSV report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*gen) return run_gen(o);
    if (*project) return run_project(o);
    if (*boxes) return run_boxes(o);
    if (*gradcheck) return run_gradcheck(o);
    if (*train) return run_train(o);
    if (*eval) return run_eval(o);
    if (*cmp) return run_compare(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainError;
  }
  return kUsageError;
}
