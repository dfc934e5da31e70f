#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "boxprior/errors.hpp"
#include "boxprior/numerics/random.hpp"
#include "boxprior/scenedata.hpp"

namespace boxprior::scenedata {
namespace {

using geometry::BoundingBox3D;
using geometry::Point3;
using geometry::RigidTransform;

constexpr int kPlacementAttempts = 200;
/// Objects float this far above the ground (plus the noise scale) so that
/// jittered ground points never fall inside a box.
constexpr double kGroundClearance = 0.05;
/// Points are sampled in the central 98% of each box extent.
constexpr double kInteriorFraction = 0.98;
/// LiDAR mount on the ego vehicle, meters ahead of the ego origin.
constexpr double kLidarForward = 0.5;

struct SizeTemplate {
  double width;
  double length;
  double height;
};

// car, pedestrian, truck, cyclist
constexpr SizeTemplate kSizes[] = {
    {1.8, 4.2, 1.5}, {0.7, 0.7, 1.8}, {2.5, 7.0, 3.0}, {0.8, 1.8, 1.6}};

// Out of line: GCC 11's SLP vectorizer drops the narrowing when this is inlined.
[[gnu::noinline]] double to_float32(double v) { return static_cast<double>(static_cast<float>(v)); }

void validate(const GeneratorConfig& cfg) {
  if (cfg.objects < 1) throw InvalidArgument("generator needs at least one object");
  if (cfg.classes < 2) throw InvalidArgument("generator needs at least two classes");
  if (cfg.min_points_per_object < 1 ||
      cfg.max_points_per_object < cfg.min_points_per_object) {
    throw InvalidArgument("invalid points-per-object range");
  }
  if (cfg.background_points < 0) throw InvalidArgument("negative background point count");
  if (cfg.image_width <= 0 || cfg.image_height <= 0) {
    throw InvalidArgument("image size must be positive");
  }
  if (!(cfg.noise_scale >= 0.0)) throw InvalidArgument("noise scale must be >= 0");
  if (!(cfg.intensity_spread >= 0.0 && cfg.intensity_spread <= 1.0)) {
    throw InvalidArgument("intensity spread must lie in [0, 1]");
  }
}

/// Rotation taking camera axes (x right, y down, z forward) to ego axes
/// (x forward, y left, z up).
RigidTransform ego_from_camera(double forward, double height) {
  return RigidTransform::from_rotation_translation({0, 0, 1, -1, 0, 0, 0, -1, 0},
                                                   {forward, 0.0, height});
}

geometry::PoseChain make_chain(const GeneratorConfig& cfg, numerics::Rng& rng) {
  const double yaw_tl = rng.uniform(-std::numbers::pi, std::numbers::pi);
  const RigidTransform global_from_ego_tl = RigidTransform::from_yaw(
      yaw_tl, rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0), 0.0);
  // Ego motion between the LiDAR and camera timestamps.
  const RigidTransform ego_tl_from_ego_tc =
      RigidTransform::from_yaw(rng.uniform(-0.02, 0.02), rng.uniform(0.1, 0.5), 0.0, 0.0);
  const RigidTransform global_from_ego_tc = global_from_ego_tl * ego_tl_from_ego_tc;

  return {
      {"camera<-ego@tc",
       geometry::invert_transform(ego_from_camera(cfg.camera_forward, cfg.camera_height))},
      {"ego@tc<-global", geometry::invert_transform(global_from_ego_tc)},
      {"global<-ego@tl", global_from_ego_tl},
      {"ego@tl<-lidar", RigidTransform::translation(kLidarForward, 0.0, kLidarHeight)},
  };
}

bool overlaps(const BoundingBox3D& a, const BoundingBox3D& b) {
  const double ra = 0.5 * std::hypot(a.width, a.length);
  const double rb = 0.5 * std::hypot(b.width, b.length);
  return std::hypot(a.cx - b.cx, a.cy - b.cy) < ra + rb + 0.2;
}

double intensity_for(int class_id, const GeneratorConfig& cfg, numerics::Rng& rng) {
  const double band = 1.0 / cfg.classes;
  return to_float32(band * (class_id + 0.5 + cfg.intensity_spread * (rng.uniform() - 0.5)));
}

}  // namespace

std::array<std::uint8_t, 3> class_color(int class_id) noexcept {
  static constexpr std::array<std::array<std::uint8_t, 3>, 6> kPalette = {{
      {128, 64, 128},  // ground
      {0, 0, 142},
      {220, 20, 60},
      {0, 160, 100},
      {250, 170, 30},
      {119, 11, 32},
  }};
  if (class_id >= 0 && class_id < static_cast<int>(kPalette.size())) return kPalette[class_id];
  const auto h = numerics::mix_seed(0x5eed, static_cast<std::uint64_t>(class_id));
  return {static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8),
          static_cast<std::uint8_t>(h >> 16)};
}

geometry::RigidTransform SceneBundle::extrinsic() const {
  return geometry::compose_chain(calibration.chain);
}

std::vector<geometry::BoundingBox2D> derive_boxes2d(
    std::span<const geometry::BoundingBox3D> boxes, const geometry::Calibration& calib,
    const geometry::ImagePlane& plane) {
  const RigidTransform t = geometry::compose_chain(calib.chain);
  std::vector<geometry::BoundingBox2D> out;
  out.reserve(boxes.size());
  for (const auto& box : boxes) {
    try {
      out.push_back(geometry::project_box3d(box, calib.intrinsics, t, plane));
    } catch (const BoxNotVisibleError&) {
    }
  }
  return out;
}

SceneBundle generate_scene(const GeneratorConfig& cfg) {
  validate(cfg);
  numerics::Rng rng(cfg.seed);

  SceneBundle scene;
  const double fx = 0.6 * cfg.image_width;
  scene.calibration.intrinsics =
      geometry::IntrinsicMatrix::pinhole(fx, fx, 0.5 * cfg.image_width, 0.5 * cfg.image_height);
  scene.calibration.chain = make_chain(cfg, rng);
  scene.image = RgbImage(cfg.image_width, cfg.image_height);
  const geometry::ImagePlane plane = scene.image.plane();
  const RigidTransform extrinsic = scene.extrinsic();
  const auto& k = scene.calibration.intrinsics;

  // Place objects in view, without overlaps.
  const double ground_z = -kLidarHeight;
  for (int obj = 0; obj < cfg.objects; ++obj) {
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      const int class_id = 1 + static_cast<int>(rng.below(cfg.classes - 1));
      const SizeTemplate& tmpl = kSizes[(class_id - 1) % std::size(kSizes)];
      BoundingBox3D box;
      box.width = tmpl.width * rng.uniform(0.9, 1.1);
      box.length = tmpl.length * rng.uniform(0.9, 1.1);
      box.height = tmpl.height * rng.uniform(0.9, 1.1);
      box.cx = rng.uniform(8.0, 28.0);
      box.cy = rng.uniform(-0.5, 0.5) * box.cx;
      box.cz = ground_z + kGroundClearance + cfg.noise_scale + 0.5 * box.height;
      box.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
      box.class_id = class_id;

      const bool separated = std::all_of(
          scene.boxes3d.begin(), scene.boxes3d.end(),
          [&](const BoundingBox3D& other) { return !overlaps(box, other); });
      if (!separated) continue;
      bool corners_visible = true;
      for (const Point3& c : geometry::box3d_corners(box)) {
        const Point3 cam = extrinsic.apply(c);
        corners_visible = corners_visible && cam.z > 0.0;
      }
      if (!corners_visible) continue;
      const geometry::PointCloud center{{Point3{box.cx, box.cy, box.cz, 0.0}}};
      if (geometry::project_points(center, k, extrinsic, plane).empty()) continue;
      scene.boxes3d.push_back(box);
      break;
    }
  }
  if (scene.boxes3d.empty()) {
    throw GenerationError("no object could be placed in view after " +
                          std::to_string(kPlacementAttempts) + " attempts");
  }

  // Object points, uniform in the box interior.
  for (const BoundingBox3D& box : scene.boxes3d) {
    const int count = cfg.min_points_per_object +
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(
                          cfg.max_points_per_object - cfg.min_points_per_object + 1)));
    const double c = std::cos(box.yaw);
    const double s = std::sin(box.yaw);
    for (int i = 0; i < count; ++i) {
      const double lx = kInteriorFraction * box.length * (rng.uniform() - 0.5);
      const double ly = kInteriorFraction * box.width * (rng.uniform() - 0.5);
      const double lz = kInteriorFraction * box.height * (rng.uniform() - 0.5);
      scene.cloud.points.push_back(Point3{to_float32(box.cx + c * lx - s * ly),
                                          to_float32(box.cy + s * lx + c * ly),
                                          to_float32(box.cz + lz),
                                          intensity_for(box.class_id, cfg, rng)});
      scene.labels.push_back(box.class_id);
    }
  }

  // Ground plane around the vehicle, most of it outside the camera view.
  for (int i = 0; i < cfg.background_points; ++i) {
    const double x = rng.uniform(-20.0, 35.0);
    const double y = rng.uniform(-20.0, 20.0);
    const double z = ground_z + rng.uniform(-cfg.noise_scale, cfg.noise_scale);
    scene.cloud.points.push_back(
        Point3{to_float32(x), to_float32(y), to_float32(z), intensity_for(0, cfg, rng)});
    scene.labels.push_back(0);
  }

  // Render per-class colors at projected points, nearest point wins.
  const auto projected = geometry::project_points(scene.cloud, k, extrinsic, plane);
  std::vector<double> depth_buffer(static_cast<std::size_t>(plane.pixel_count()),
                                   std::numeric_limits<double>::infinity());
  for (const auto& p : projected) {
    const auto px = geometry::rasterize(p);
    const std::size_t slot = static_cast<std::size_t>(px.v) * plane.width + px.u;
    if (p.depth >= depth_buffer[slot]) continue;
    depth_buffer[slot] = p.depth;
    const auto color = class_color(scene.labels[p.source_index]);
    std::copy(color.begin(), color.end(),
              scene.image.at(static_cast<int>(px.u), static_cast<int>(px.v)));
  }

  scene.boxes2d = derive_boxes2d(scene.boxes3d, scene.calibration, plane);
  return scene;
}

}  // namespace boxprior::scenedata
