#pragma once

// LiDAR-to-camera geometry: rigid transforms and timestamped pose chains,
// pinhole projection into a single image plane, point-to-pixel
// rasterization, and 3D-to-2D box derivation.
//
// All coordinates and matrices are 64-bit floats. Every function here is a
// pure function of its arguments.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace boxprior::geometry {

/// A LiDAR return: position in meters (LiDAR frame) plus reflection
/// intensity in [0, 1].
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

struct PointCloud {
  std::vector<Point3> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

struct ImagePlane {
  int width = 0;
  int height = 0;

  std::int64_t pixel_count() const noexcept {
    return static_cast<std::int64_t>(width) * height;
  }

  friend bool operator==(const ImagePlane&, const ImagePlane&) = default;
};

/// 3x4 camera intrinsic matrix K, row-major.
///
/// The bottom row must be exactly [0, 0, 1, 0] and both focal entries
/// positive; the constructor throws InvalidArgument otherwise.
class IntrinsicMatrix {
 public:
  explicit IntrinsicMatrix(const std::array<double, 12>& entries);

  static IntrinsicMatrix pinhole(double fx, double fy, double cx, double cy);

  double operator()(int row, int col) const { return entries_[row * 4 + col]; }
  const std::array<double, 12>& entries() const noexcept { return entries_; }

  friend bool operator==(const IntrinsicMatrix&,
                         const IntrinsicMatrix&) = default;

 private:
  std::array<double, 12> entries_;
};

/// 4x4 rigid-body transform, row-major.
///
/// Invariants: bottom row [0, 0, 0, 1]; rotation block orthonormal to 1e-9
/// (max-abs of R^T R - I) with positive determinant.
class RigidTransform {
 public:
  static constexpr double kOrthonormalTolerance = 1e-9;

  /// Identity.
  RigidTransform();
  /// Throws InvalidArgument when the entries are not a rigid transform.
  explicit RigidTransform(const std::array<double, 16>& entries);

  static RigidTransform from_rotation_translation(
      const std::array<double, 9>& rotation,
      const std::array<double, 3>& translation);
  static RigidTransform translation(double tx, double ty, double tz);
  /// Rotation by `yaw` about +z, then translation.
  static RigidTransform from_yaw(double yaw, double tx, double ty, double tz);

  double operator()(int row, int col) const { return entries_[row * 4 + col]; }
  const std::array<double, 16>& entries() const noexcept { return entries_; }

  /// Matrix product `*this * rhs` (rhs applied first).
  RigidTransform operator*(const RigidTransform& rhs) const;

  /// Transforms a point; intensity is carried through unchanged.
  Point3 apply(const Point3& p) const noexcept;

  friend bool operator==(const RigidTransform&,
                         const RigidTransform&) = default;

 private:
  struct Unchecked {};
  RigidTransform(Unchecked, const std::array<double, 16>& entries)
      : entries_(entries) {}

  std::array<double, 16> entries_;
};

/// One stage of a pose chain, labelled `target<-source`
/// (e.g. `camera<-ego@tc`).
struct PoseStage {
  std::string label;
  RigidTransform transform;

  friend bool operator==(const PoseStage&, const PoseStage&) = default;
};

/// Ordered stages, written left to right in multiplication order: the last
/// stage is applied to the point first.
using PoseChain = std::vector<PoseStage>;

struct FrameLabel {
  std::string target;
  std::string source;
};

/// Splits `target<-source`; throws ChainError on a malformed label.
FrameLabel parse_frame_label(std::string_view label);
std::string make_frame_label(std::string_view target, std::string_view source);

/// Product of all stages in written order. Throws ChainError when the chain
/// is empty or when the source frame of a stage differs from the target
/// frame of the stage that follows it.
RigidTransform compose_chain(const PoseChain& chain);

RigidTransform invert_transform(const RigidTransform& t);

/// Inverse chain: stages reversed, each inverted, labels swapped.
PoseChain invert_chain(const PoseChain& chain);

struct ProjectedPoint {
  std::size_t source_index = 0;
  double u = 0.0;  ///< float pixel column
  double v = 0.0;  ///< float pixel row
  double depth = 0.0;

  friend bool operator==(const ProjectedPoint&,
                         const ProjectedPoint&) = default;
};

struct PixelCoord {
  std::int64_t u = 0;
  std::int64_t v = 0;

  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// P = K * T, the 3x4 matrix mapping homogeneous LiDAR points to
/// homogeneous pixels.
std::array<double, 12> projection_matrix(const IntrinsicMatrix& k,
                                         const RigidTransform& t);

/// Projects every point with positive camera depth that lands inside
/// [0, width) x [0, height). The divisor is the camera-frame depth (third
/// homogeneous component). Output keeps input order.
std::vector<ProjectedPoint> project_points(const PointCloud& cloud,
                                           const IntrinsicMatrix& k,
                                           const RigidTransform& t,
                                           const ImagePlane& plane);

/// Oriented 3D box. Length runs along the heading (box x axis), width
/// across it, height along z. Yaw is about +z.
struct BoundingBox3D {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double width = 1.0;
  double length = 1.0;
  double height = 1.0;
  double yaw = 0.0;
  int class_id = 0;

  friend bool operator==(const BoundingBox3D&, const BoundingBox3D&) = default;
};

/// Axis-aligned image box in float pixel coordinates.
struct BoundingBox2D {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  int class_id = 0;

  double area() const noexcept { return (x2 - x1) * (y2 - y1); }

  friend bool operator==(const BoundingBox2D&, const BoundingBox2D&) = default;
};

/// The 8 corners of the yaw-rotated cuboid (intensity 0). Order: bit 0 of
/// the index selects +length/2, bit 1 +width/2, bit 2 +height/2.
std::array<Point3, 8> box3d_corners(const BoundingBox3D& box);

/// True when the point lies strictly inside the cuboid.
bool box3d_contains(const BoundingBox3D& box, const Point3& p) noexcept;

/// 2D box spanning the projections of the corners that have positive depth
/// (no image clipping while projecting), then clamped to the image.
/// Throws BoxNotVisibleError when every corner is behind the camera or the
/// clamped box has zero area.
BoundingBox2D project_box3d(const BoundingBox3D& box, const IntrinsicMatrix& k,
                            const RigidTransform& t, const ImagePlane& plane);

/// Source indices of projected points with x1 < u < x2 and y1 < v < y2.
std::vector<std::size_t> points_in_box2d(std::span<const ProjectedPoint> projected,
                                         const BoundingBox2D& box);

/// Same membership as points_in_box2d, reported as positions in `projected`.
std::vector<std::size_t> projected_rows_in_box2d(
    std::span<const ProjectedPoint> projected, const BoundingBox2D& box);

inline bool strictly_inside(const ProjectedPoint& p,
                            const BoundingBox2D& box) noexcept {
  return box.x1 < p.u && p.u < box.x2 && box.y1 < p.v && p.v < box.y2;
}

// ---------------------------------------------------------------------------
// Calibration text format:
//   K: <12 floats, row-major>
//   T <label>: <16 floats, row-major>     (one line per chain stage)
// Floats are written with 17 significant digits and read back exactly.

struct Calibration {
  IntrinsicMatrix intrinsics = IntrinsicMatrix::pinhole(1.0, 1.0, 0.0, 0.0);
  PoseChain chain;

  friend bool operator==(const Calibration&, const Calibration&) = default;
};

std::string format_calibration(const Calibration& calib);

/// Throws ParseError (naming `file_name` and the byte offset of the
/// offending line) on malformed input.
Calibration parse_calibration(std::string_view text,
                              const std::string& file_name = "calib.txt");

/// Shortest text that round-trips a double exactly (17 significant digits).
std::string format_double(double value);

/// Point-to-pixel matching: floor of both coordinates. Several points may
/// share a pixel.
inline PixelCoord rasterize(const ProjectedPoint& pp) noexcept {
  return PixelCoord{static_cast<std::int64_t>(std::floor(pp.u)),
                    static_cast<std::int64_t>(std::floor(pp.v))};
}

}  // namespace boxprior::geometry
