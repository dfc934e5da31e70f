#pragma once

// Synthetic scenes with known ground truth, and the on-disk scene
// directory format:
//
//   points.bin   little-endian float32 records (x, y, z, intensity)
//   labels.bin   little-endian uint32, one per point
//   calib.txt    intrinsics + pose chain (geometry calibration format)
//   boxes.txt    one 3D box per line: cx cy cz w l h yaw class
//   image.ppm    binary PPM (P6), 8-bit RGB

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "boxprior/geometry.hpp"

namespace boxprior::scenedata {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  ///< row-major, 3 bytes per pixel

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {}

  geometry::ImagePlane plane() const noexcept { return {width, height}; }
  std::uint8_t* at(int u, int v) noexcept {
    return pixels.data() + (static_cast<std::size_t>(v) * width + u) * 3;
  }
  const std::uint8_t* at(int u, int v) const noexcept {
    return pixels.data() + (static_cast<std::size_t>(v) * width + u) * 3;
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct SceneBundle {
  geometry::PointCloud cloud;
  std::vector<int> labels;  ///< one class id per point
  RgbImage image;
  geometry::Calibration calibration;
  std::vector<geometry::BoundingBox3D> boxes3d;
  /// Derived from boxes3d and the calibration; boxes that leave no visible
  /// footprint are dropped.
  std::vector<geometry::BoundingBox2D> boxes2d;

  geometry::ImagePlane plane() const noexcept { return image.plane(); }
  /// compose_chain(calibration.chain)
  geometry::RigidTransform extrinsic() const;

  friend bool operator==(const SceneBundle&, const SceneBundle&) = default;
};

struct GeneratorConfig {
  std::uint64_t seed = 7;
  int objects = 5;
  int classes = 4;  ///< class 0 is the ground; objects use 1..classes-1
  int min_points_per_object = 20;
  int max_points_per_object = 50;
  int background_points = 300;
  /// Camera mount in the ego frame (meters ahead of / above the ego origin).
  double camera_forward = 1.5;
  double camera_height = 1.5;
  int image_width = 160;
  int image_height = 120;
  double noise_scale = 0.02;  ///< ground-height jitter, meters
  /// Intensity of class k is uniform over the central `intensity_spread`
  /// fraction of the band [k/c, (k+1)/c); 1 fills the whole band.
  double intensity_spread = 0.2;
};

/// Height of the LiDAR above the ground plane; the ground sits at
/// z = -kLidarHeight in the LiDAR frame.
inline constexpr double kLidarHeight = 1.8;

/// Throws InvalidArgument for an invalid config and GenerationError when no
/// object could be placed in view within the retry budget.
SceneBundle generate_scene(const GeneratorConfig& cfg);

/// Per-class flat color used when rendering points into the image.
std::array<std::uint8_t, 3> class_color(int class_id) noexcept;

/// Projects every 3D box, keeping those with a visible footprint.
std::vector<geometry::BoundingBox2D> derive_boxes2d(
    std::span<const geometry::BoundingBox3D> boxes, const geometry::Calibration& calib,
    const geometry::ImagePlane& plane);

/// Writes the five scene files into `dir` (created if needed). Throws
/// IoError naming the path on failure.
void write_scene(const SceneBundle& bundle, const std::filesystem::path& dir);

/// Parses a scene directory and re-derives the 2D boxes. Throws ParseError
/// (file + byte offset) for malformed content, ConsistencyError when the
/// point and label counts differ, IoError when a file cannot be read.
SceneBundle read_scene(const std::filesystem::path& dir);

// Individual codecs, exposed for tools and tests.
std::vector<std::uint8_t> encode_points(const geometry::PointCloud& cloud);
geometry::PointCloud decode_points(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_labels(std::span<const int> labels);
std::vector<int> decode_labels(std::span<const std::uint8_t> bytes);
std::string format_boxes(std::span<const geometry::BoundingBox3D> boxes);
std::vector<geometry::BoundingBox3D> parse_boxes(std::string_view text);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);

}  // namespace boxprior::scenedata
