// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any
// criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <sstream>
#include <set>
#include <string>
#include <vector>

#include "boxprior/fusion/training.hpp"
#include "boxprior/geometry.hpp"
#include "boxprior/numerics/losses.hpp"
#include "boxprior/numerics/ops.hpp"
#include "boxprior/scenedata.hpp"
#include "support/op_checks.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
namespace geo = boxprior::geometry;
namespace num = boxprior::numerics;
namespace fus = boxprior::fusion;
using num::Matrix;
using num::Rng;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* pattern, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

std::string sci(double v) { return fmt("%.3g", v); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

geo::IntrinsicMatrix random_intrinsics(Rng& rng, int width, int height) {
  const double fx = rng.uniform(300.0, 1200.0);
  const double fy = fx * rng.uniform(0.9, 1.1);
  return geo::IntrinsicMatrix({fx, rng.uniform(-2.0, 2.0), rng.uniform(0.3, 0.7) * width, 0.0,
                               0.0, fy, rng.uniform(0.3, 0.7) * height, 0.0,  //
                               0.0, 0.0, 1.0, 0.0});
}

std::vector<oracle::Affine> stage_entries(const geo::PoseChain& chain) {
  std::vector<oracle::Affine> out;
  for (const auto& s : chain) out.push_back(oracle::from_transform(s.transform));
  return out;
}

/// Points spread around the camera frustum (some behind, some outside),
/// expressed in the source frame of `lidar_to_camera`.
geo::PointCloud frustum_cloud(Rng& rng, std::size_t n, const geo::RigidTransform& lidar_to_camera) {
  const geo::RigidTransform back = geo::invert_transform(lidar_to_camera);
  geo::PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rng.uniform(-5.0, 60.0);
    const double spread = std::max(std::abs(z), 1.0);
    cloud.points.push_back(back.apply({rng.uniform(-1.2, 1.2) * spread,
                                       rng.uniform(-0.9, 0.9) * spread, z, rng.uniform()}));
  }
  return cloud;
}

// ---------------------------------------------------------------- criteria

Outcome projection_oracle() {
  Rng rng(101);
  constexpr int kWidth = 1600;
  constexpr int kHeight = 900;
  constexpr int kConfigs = 10;
  constexpr std::size_t kPoints = 1000;
  double worst = 0.0;
  bool same_sets = true;
  std::size_t in_view = 0;
  double library_seconds = 0.0;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < kConfigs; ++trial) {
    const auto k = random_intrinsics(rng, kWidth, kHeight);
    const auto chain = oracle::random_chain(rng, 4, 50.0);
    const auto t = geo::compose_chain(chain);
    const auto cloud = frustum_cloud(rng, kPoints, t);
    const auto t1 = Clock::now();
    const auto got = geo::project_points(cloud, k, t, {kWidth, kHeight});
    library_seconds += seconds_since(t1);
    const auto stages = stage_entries(chain);
    const auto want = oracle::project(cloud, k.entries(), stages, kWidth, kHeight);
    if (got.size() != want.size()) {
      same_sets = false;
      continue;
    }
    in_view += got.size();
    for (std::size_t i = 0; i < got.size(); ++i) {
      same_sets = same_sets && got[i].source_index == want[i].index;
      worst = std::max({worst, std::abs(got[i].u - want[i].u), std::abs(got[i].v - want[i].v)});
    }
  }
  const double elapsed = seconds_since(t0);
  return {same_sets && worst < 1e-9 && elapsed < 5.0,
          "10^4 points, " + std::to_string(in_view) + " in view, max pixel error " + sci(worst) +
              ", sets " + (same_sets ? "identical" : "DIFFER") + ", " + fmt("%.3f s", elapsed) +
              " (library " + fmt("%.4f s", library_seconds) + ")"};
}

Outcome chain_identity() {
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto chain = oracle::random_chain(rng, 2 + rng.below(5), 100.0);
    const auto product = geo::compose_chain(chain) * geo::compose_chain(geo::invert_chain(chain));
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        worst = std::max(worst, std::abs(product(r, c) - (r == c ? 1.0 : 0.0)));
      }
    }
  }
  return {worst < 1e-12, "100 chains, max |T T^-1 - I| " + sci(worst)};
}

Outcome box_derivation() {
  Rng rng(303);
  constexpr int kWidth = 1280;
  constexpr int kHeight = 720;
  int boxes = 0;
  int clamped = 0;
  int partly_behind = 0;
  double worst = 0.0;
  bool contains_all = true;
  std::size_t members = 0;
  while (boxes < 100) {
    const auto k = random_intrinsics(rng, kWidth, kHeight);
    const auto chain = oracle::random_chain(rng, 4, 30.0);
    const auto t = geo::compose_chain(chain);
    const auto back = geo::invert_transform(t);
    const double depth = rng.uniform(2.0, 40.0);
    const auto center = back.apply({rng.uniform(-0.8, 0.8) * depth,
                                    rng.uniform(-0.5, 0.5) * depth, depth, 0.0});
    geo::BoundingBox3D box{center.x, center.y, center.z, rng.uniform(0.5, 3.0),
                           rng.uniform(0.5, 8.0), rng.uniform(0.5, 3.5),
                           rng.uniform(-std::numbers::pi, std::numbers::pi), 1};
    geo::BoundingBox2D got;
    try {
      got = geo::project_box3d(box, k, t, {kWidth, kHeight});
    } catch (const boxprior::BoxNotVisibleError&) {
      continue;
    }
    int behind = 0;
    for (const auto& c : oracle::box_corners(box)) behind += t.apply({c[0], c[1], c[2], 0}).z <= 0;
    // Boxes reaching behind the camera get the extent check only: interior
    // points near the camera plane can project outside the corner extent.
    partly_behind += behind > 0;
    boxes += behind == 0;
    const auto stages = stage_entries(chain);
    const auto e = oracle::corner_extent(box, k.entries(), stages);
    const std::array<double, 4> want{std::clamp(e[0], 0.0, double(kWidth)),
                                     std::clamp(e[1], 0.0, double(kHeight)),
                                     std::clamp(e[2], 0.0, double(kWidth)),
                                     std::clamp(e[3], 0.0, double(kHeight))};
    clamped += behind == 0 &&
               (want[0] != e[0] || want[1] != e[1] || want[2] != e[2] || want[3] != e[3]);
    worst = std::max({worst, std::abs(got.x1 - want[0]), std::abs(got.y1 - want[1]),
                      std::abs(got.x2 - want[2]), std::abs(got.y2 - want[3])});
    if (behind > 0) continue;

    geo::PointCloud inside;
    const double c = std::cos(box.yaw);
    const double s = std::sin(box.yaw);
    for (int i = 0; i < 50; ++i) {
      const double lx = 0.98 * box.length * (rng.uniform() - 0.5);
      const double ly = 0.98 * box.width * (rng.uniform() - 0.5);
      const double lz = 0.98 * box.height * (rng.uniform() - 0.5);
      inside.points.push_back({box.cx + c * lx - s * ly, box.cy + s * lx + c * ly, box.cz + lz, 0});
    }
    for (const auto& p : geo::project_points(inside, k, t, {kWidth, kHeight})) {
      ++members;
      contains_all = contains_all && got.x1 <= p.u && p.u <= got.x2 && got.y1 <= p.v &&
                     p.v <= got.y2;
    }
  }
  return {worst < 1e-9 && contains_all,
          "100 boxes in front of the camera (" + std::to_string(clamped) + " clamped) plus " +
              std::to_string(partly_behind) + " partly behind, max corner error " + sci(worst) + ", " +
              std::to_string(members) + " member points " +
              (contains_all ? "all contained" : "NOT all contained")};
}

Outcome membership() {
  Rng rng(404);
  int pairs = 0;
  int mismatches = 0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; pairs < 100; ++seed) {
    boxprior::scenedata::GeneratorConfig cfg;
    cfg.seed = 4000 + seed;
    const auto scene = boxprior::scenedata::generate_scene(cfg);
    const auto projected = geo::project_points(scene.cloud, scene.calibration.intrinsics,
                                               scene.extrinsic(), scene.plane());
    std::vector<geo::BoundingBox2D> boxes = scene.boxes2d;
    const double w = scene.image.width;
    const double h = scene.image.height;
    double x1 = rng.uniform(0.0, w);
    double x2 = rng.uniform(0.0, w);
    double y1 = rng.uniform(0.0, h);
    double y2 = rng.uniform(0.0, h);
    boxes.push_back({std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2), 0});
    for (const auto& box : boxes) {
      if (pairs == 100) break;
      ++pairs;
      const auto got = geo::points_in_box2d(projected, box);
      const auto want = oracle::members(projected, box);
      mismatches += got != want;
      checked += want.size();
    }
  }
  return {mismatches == 0, "100 (scene, box) pairs, " + std::to_string(checked) +
                               " members, " + std::to_string(mismatches) + " mismatches"};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst_op = 0.0;
  std::string worst_op_name;
  std::size_t op_coordinates = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& check : oracle::check_parameterized_ops(500 + seed, 1e-5)) {
      op_coordinates += check.report.coordinates;
      if (check.report.max_relative_error() >= worst_op) {
        worst_op = check.report.max_relative_error();
        worst_op_name = check.op;
      }
    }
  }
  double worst_model = 0.0;
  std::string worst_tensor;
  std::size_t model_coordinates = 0;
  const fus::ModelConfig config;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto report = fus::check_model_gradients(config, seed, 0.1, 1e-5);
    model_coordinates += report.coordinates;
    if (report.max_relative_error() >= worst_model) {
      worst_model = report.max_relative_error();
      worst_tensor = report.worst() ? report.worst()->name : "";
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst_op < 1e-4 && worst_model < 1e-4 && elapsed < 60.0,
          "10 seeds; ops max rel error " + sci(worst_op) + " (" + worst_op_name + ", " +
              std::to_string(op_coordinates) + " coords); L_total max rel error " +
              sci(worst_model) + " (" + worst_tensor + ", " + std::to_string(model_coordinates) +
              " coords); " + fmt("%.1f s", elapsed)};
}

Outcome loss_properties() {
  Rng rng(606);
  double kl_min = 1.0;
  double kl_self = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t c = 2 + rng.below(6);
    const Matrix p = oracle::random_probs(rng, 1, c);
    const Matrix q = oracle::random_probs(rng, 1, c);
    kl_min = std::min(kl_min, num::kl_divergence(p, q));
    kl_self = std::max(kl_self, std::abs(num::kl_divergence(p, p)));
  }

  double ce_error = 0.0;
  for (std::size_t c : {2, 3, 4, 17}) {
    Matrix logits(8, c);
    std::vector<int> labels(8);
    for (std::size_t i = 0; i < 8; ++i) {
      const double level = rng.uniform(-5.0, 5.0);
      for (std::size_t j = 0; j < c; ++j) logits(i, j) = level;
      labels[i] = static_cast<int>(rng.below(c));
    }
    ce_error = std::max(ce_error, std::abs(num::cross_entropy(logits, labels) -
                                           std::log(static_cast<double>(c))));
  }

  // Every 2-class instance with N <= 6 on the 0.25 grid against the
  // level-set form; up to N = 4 also against the maximum over orderings.
  double lovasz_error = 0.0;
  std::size_t instances = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    std::size_t grid = 1;
    for (std::size_t i = 0; i < n; ++i) grid *= 5;
    Matrix probs(n, 2);
    std::vector<int> labels(n);
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      for (std::size_t g = 0; g < grid; ++g) {
        std::size_t code = g;
        for (std::size_t i = 0; i < n; ++i) {
          probs(i, 1) = 0.25 * static_cast<double>(code % 5);
          probs(i, 0) = 1.0 - probs(i, 1);
          code /= 5;
          labels[i] = static_cast<int>((mask >> i) & 1);
        }
        const double got = num::lovasz_softmax(probs, labels);
        lovasz_error = std::max(lovasz_error, std::abs(got - oracle::lovasz_level_sets(probs, labels)));
        if (n <= 4) {
          lovasz_error = std::max(lovasz_error, std::abs(got - oracle::lovasz_exhaustive(probs, labels)));
        }
        ++instances;
      }
    }
  }

  double perfect = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const std::size_t c = 2 + rng.below(3);
    Matrix probs(n, c);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng.below(c));
      probs(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    perfect = std::max(perfect, std::abs(num::lovasz_softmax(probs, labels)));
  }

  const bool pass = kl_min >= 0.0 && kl_self < 1e-12 && ce_error < 1e-12 &&
                    lovasz_error < 1e-9 && perfect == 0.0;
  return {pass, "KL min " + sci(kl_min) + ", KL(p||p) max " + sci(kl_self) + ", |CE - ln c| " +
                    sci(ce_error) + ", Lovasz vs exhaustive " + sci(lovasz_error) + " over " +
                    std::to_string(instances) + " instances, perfect " + sci(perfect)};
}

bool branch_side(const std::string& name) {
  for (const char* prefix : {"pixel_encoder", "learner", "downsampler", "attention",
                             "class_embeddings", "branch_classifier"}) {
    if (name.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

Outcome distillation_direction() {
  const fus::ModelConfig config;
  const auto scenes = fus::training_scenes(77, 2);
  const auto inputs = fus::prepare_scenes(scenes, config);
  const fus::ModelParams base = fus::init_model(config, 77);

  double branch_grad = 0.0;
  double classifier_grad = 0.0;
  std::vector<Matrix> teacher;
  {
    num::Tape t;
    const fus::ModelVars vars = fus::bind(t, base);
    const fus::Objective obj = fus::build_objective(t, vars, inputs, config, 0.1);
    t.backward(obj.distill);
    fus::ModelParams grads = fus::gradients(t, vars);
    fus::for_each_tensor(grads, [&](const std::string& name, Matrix& g) {
      for (double v : g.data()) {
        if (branch_side(name)) branch_grad = std::max(branch_grad, std::abs(v));
        if (name.rfind("layer_classifier", 0) == 0) {
          classifier_grad = std::max(classifier_grad, std::abs(v));
        }
      }
    });
    for (num::Var p : obj.branch_probs) teacher.push_back(t.value(p));
  }

  auto distill = [&](const fus::ModelParams& p) {
    num::Tape t;
    const fus::ModelVars vars = fus::bind(t, p, false);
    return t.scalar(fus::build_objective(t, vars, inputs, config, 0.1, teacher).distill);
  };
  const double reference = distill(base);
  auto perturbed = [&](bool want_branch) {
    Rng rng(want_branch ? 1 : 2);
    fus::ModelParams p = base;
    fus::for_each_tensor(p, [&](const std::string& name, Matrix& m) {
      const bool target = want_branch ? branch_side(name) : name.rfind("layer_classifier", 0) == 0;
      if (!target) return;
      for (double& v : m.data()) v += rng.uniform(-1e-3, 1e-3);
    });
    return std::abs(distill(p) - reference);
  };
  const double branch_change = perturbed(true);
  const double classifier_change = perturbed(false);
  return {branch_grad == 0.0 && branch_change < 1e-12 && classifier_grad > 1e-8 &&
              classifier_change > 1e-9,
          "branch-side: max |dL_xM/dtheta| " + sci(branch_grad) + ", change " +
              sci(branch_change) + "; 3D classifiers: max |dL_xM/dtheta| " +
              sci(classifier_grad) + ", change " + sci(classifier_change)};
}

Outcome msfskd_zero() {
  Rng rng(808);
  bool exact = true;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    const std::size_t d = 1 + rng.below(16);
    const std::array<std::size_t, 3> widths{2 * d, d + 3, d};
    num::MlpParams a = num::init_mlp(widths, num::Activation::kTanh, num::Activation::kNone, rng);
    num::MlpParams b = num::init_mlp(widths, num::Activation::kRelu, num::Activation::kNone, rng);
    for (auto* mlp : {&a, &b}) {
      for (auto& layer : mlp->layers) {
        std::fill(layer.weight.data().begin(), layer.weight.data().end(), 0.0);
        std::fill(layer.bias.data().begin(), layer.bias.data().end(), 0.0);
      }
    }
    const Matrix f2d = oracle::random_matrix(rng, n, d, 10.0);
    const Matrix f2d3d = oracle::random_matrix(rng, n, 2 * d, 10.0);
    exact = exact && fus::msfskd_fuse(f2d, f2d3d, a, b) == f2d;
  }
  return {exact, std::string("20 random shapes, output ") +
                     (exact ? "bit-identical to f2d" : "DIFFERS from f2d")};
}

struct TrainingRuns {
  std::vector<fus::CompareRun> runs;
  double seconds = 0.0;
};

const TrainingRuns& training_runs() {
  static const TrainingRuns cached = [] {
    TrainingRuns r;
    fus::TrainConfig config;
    config.lambda = 0.1;
    const auto t0 = Clock::now();
    r.runs = fus::compare(config, 10, 8);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return cached;
}

Outcome toy_training() {
  const auto& tr = training_runs();
  std::vector<double> drops;
  std::vector<double> accuracy;
  for (const auto& r : tr.runs) {
    drops.push_back(1.0 - r.last_loss_with / r.first_loss_with);
    accuracy.push_back(r.accuracy_with);
  }
  const double per_run = tr.seconds / (2.0 * static_cast<double>(tr.runs.size()));
  const double drop = median(drops);
  const double acc = median(accuracy);
  return {drop >= 0.5 && acc >= 0.9 && per_run < 300.0,
          "10 seeds, 8 scenes, 300 steps: median L_total drop " + fmt("%.1f%%", 100 * drop) +
              " (min " + fmt("%.1f%%", 100 * *std::min_element(drops.begin(), drops.end())) +
              "), held-out in-box accuracy median " + fmt("%.3f", acc) + " (min " +
              fmt("%.3f", *std::min_element(accuracy.begin(), accuracy.end())) + "), " +
              fmt("%.1f s per run", per_run)};
}

Outcome distillation_benefit() {
  const auto& tr = training_runs();
  int wins = 0;
  std::string detail;
  for (const auto& r : tr.runs) {
    wins += r.accuracy_with >= r.accuracy_without;
    detail += " " + fmt("%.2f", r.accuracy_with) + "/" + fmt("%.2f", r.accuracy_without);
  }
  return {wins >= 7, std::to_string(wins) + " of 10 seeds with lambda=0.1 >= lambda=0;" + detail};
}

Outcome throughput() {
  Rng rng(1111);
  constexpr int kWidth = 1600;
  constexpr int kHeight = 900;
  const auto k = random_intrinsics(rng, kWidth, kHeight);
  const auto t = geo::compose_chain(oracle::random_chain(rng, 4, 20.0));
  const auto cloud = frustum_cloud(rng, 1'000'000, t);
  double best = 1e9;
  std::size_t in_view = 0;
  std::int64_t checksum = 0;
  for (int rep = 0; rep < 3; ++rep) {
    const auto t0 = Clock::now();
    const auto projected = geo::project_points(cloud, k, t, {kWidth, kHeight});
    for (const auto& p : projected) {
      const auto px = geo::rasterize(p);
      checksum += px.u + px.v;
    }
    best = std::min(best, seconds_since(t0));
    in_view = projected.size();
  }
  return {best < 0.25, "10^6 points (" + std::to_string(in_view) + " in view), best of 3 " +
                           fmt("%.1f ms", 1000 * best) + " (checksum " +
                           std::to_string(checksum % 1000) + ")"};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  std::vector<fs::path> left;
  std::vector<fs::path> right;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) left.push_back(fs::relative(e.path(), a));
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) right.push_back(fs::relative(e.path(), b));
  }
  std::sort(left.begin(), left.end());
  std::sort(right.begin(), right.end());
  if (left != right || left.empty()) return false;
  files = left.size();
  for (const auto& rel : left) {
    if (read_bytes(a / rel) != read_bytes(b / rel)) return false;
  }
  return true;
}

int run(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "boxprior_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = BOXPRIOR_CLI;
  bool ok = true;
  std::size_t scene_files = 0;
  for (const char* run_name : {"a", "b"}) {
    const fs::path dir = root / run_name;
    ok = ok && run(cli + " gen --seed 7 --out " + (dir / "scenes").string()) == 0;
    ok = ok && run(cli + " train --seed 7 --out " + (dir / "train").string()) == 0;
  }
  if (!ok) return {false, "CLI invocation failed"};
  const std::string curve_a = read_bytes(root / "a" / "train" / "loss_curve.csv");
  const std::string curve_b = read_bytes(root / "b" / "train" / "loss_curve.csv");
  const bool curves = !curve_a.empty() && curve_a == curve_b;
  const bool scenes = same_tree(root / "a" / "scenes", root / "b" / "scenes", scene_files);
  const auto steps = std::count(curve_a.begin(), curve_a.end(), '\n') - 1;
  fs::remove_all(root);
  return {curves && scenes, "train --seed 7: " + std::to_string(steps) + "-step loss curves " +
                                (curves ? "identical" : "DIFFER") + "; gen --seed 7: " +
                                std::to_string(scene_files) + " files " +
                                (scenes ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number; default runs all.
  std::set<std::size_t> only;
  for (int a = 1; a < argc; ++a) only.insert(std::stoul(argv[a]));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"projection oracle", projection_oracle},
      {"chain algebra", chain_identity},
      {"box derivation", box_derivation},
      {"membership equivalence", membership},
      {"gradient suite", gradient_suite},
      {"loss properties", loss_properties},
      {"distillation directionality", distillation_direction},
      {"gated fusion zero case", msfskd_zero},
      {"toy training", toy_training},
      {"distillation benefit", distillation_benefit},
      {"throughput", throughput},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.contains(i + 1)) continue;
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += !outcome.pass;
    std::printf("%s %2zu %s: %s\n", outcome.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), outcome.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
