#include "boxprior/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>

#include "boxprior/errors.hpp"

namespace boxprior::geometry {
namespace {

constexpr std::string_view kArrow = "<-";

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

void check_rigid(const std::array<double, 16>& m) {
  if (!all_finite(m)) throw InvalidArgument("rigid transform has non-finite entries");
  if (m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0) {
    throw InvalidArgument("rigid transform bottom row must be [0, 0, 0, 1]");
  }
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += m[k * 4 + i] * m[k * 4 + j];
      worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  }
  if (worst >= RigidTransform::kOrthonormalTolerance) {
    throw InvalidArgument("rigid transform rotation block is not orthonormal");
  }
  const double det = m[0] * (m[5] * m[10] - m[6] * m[9]) -
                     m[1] * (m[4] * m[10] - m[6] * m[8]) +
                     m[2] * (m[4] * m[9] - m[5] * m[8]);
  if (det <= 0.0) throw InvalidArgument("rigid transform rotation has det <= 0");
}

}  // namespace

IntrinsicMatrix::IntrinsicMatrix(const std::array<double, 12>& entries)
    : entries_(entries) {
  if (!all_finite(entries_)) throw InvalidArgument("intrinsics have non-finite entries");
  if (entries_[8] != 0.0 || entries_[9] != 0.0 || entries_[10] != 1.0 ||
      entries_[11] != 0.0) {
    throw InvalidArgument("intrinsic bottom row must be [0, 0, 1, 0]");
  }
  if (!(entries_[0] > 0.0) || !(entries_[5] > 0.0)) {
    throw InvalidArgument("intrinsic focal entries must be positive");
  }
}

IntrinsicMatrix IntrinsicMatrix::pinhole(double fx, double fy, double cx,
                                         double cy) {
  return IntrinsicMatrix({fx, 0.0, cx, 0.0,  //
                          0.0, fy, cy, 0.0,  //
                          0.0, 0.0, 1.0, 0.0});
}

RigidTransform::RigidTransform()
    : entries_{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1} {}

RigidTransform::RigidTransform(const std::array<double, 16>& entries)
    : entries_(entries) {
  check_rigid(entries_);
}

RigidTransform RigidTransform::from_rotation_translation(
    const std::array<double, 9>& r, const std::array<double, 3>& t) {
  return RigidTransform({r[0], r[1], r[2], t[0],  //
                         r[3], r[4], r[5], t[1],  //
                         r[6], r[7], r[8], t[2],  //
                         0.0, 0.0, 0.0, 1.0});
}

RigidTransform RigidTransform::translation(double tx, double ty, double tz) {
  return from_rotation_translation({1, 0, 0, 0, 1, 0, 0, 0, 1}, {tx, ty, tz});
}

RigidTransform RigidTransform::from_yaw(double yaw, double tx, double ty,
                                        double tz) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return from_rotation_translation({c, -s, 0, s, c, 0, 0, 0, 1}, {tx, ty, tz});
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  std::array<double, 16> out{};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += entries_[i * 4 + k] * rhs.entries_[k * 4 + j];
      out[i * 4 + j] = acc;
    }
  }
  return RigidTransform(out);
}

Point3 RigidTransform::apply(const Point3& p) const noexcept {
  const auto& m = entries_;
  return Point3{m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
                m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
                m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11], p.intensity};
}

FrameLabel parse_frame_label(std::string_view label) {
  const auto pos = label.find(kArrow);
  if (pos == std::string_view::npos || pos == 0 ||
      pos + kArrow.size() >= label.size()) {
    throw ChainError("pose stage label '" + std::string(label) +
                     "' is not of the form target<-source");
  }
  return FrameLabel{std::string(label.substr(0, pos)),
                    std::string(label.substr(pos + kArrow.size()))};
}

std::string make_frame_label(std::string_view target, std::string_view source) {
  std::string out(target);
  out += kArrow;
  out += source;
  return out;
}

RigidTransform compose_chain(const PoseChain& chain) {
  if (chain.empty()) throw ChainError("pose chain is empty");
  FrameLabel previous = parse_frame_label(chain.front().label);
  RigidTransform product = chain.front().transform;
  for (std::size_t i = 1; i < chain.size(); ++i) {
    FrameLabel current = parse_frame_label(chain[i].label);
    if (current.target != previous.source) {
      throw ChainError("pose chain stage " + std::to_string(i) + " ('" +
                       chain[i].label + "') does not feed frame '" +
                       previous.source + "'");
    }
    product = product * chain[i].transform;
    previous = std::move(current);
  }
  return product;
}

RigidTransform invert_transform(const RigidTransform& t) {
  // [R | p]^-1 = [R^T | -R^T p]
  std::array<double, 9> rt{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) rt[i * 3 + j] = t(j, i);
  }
  std::array<double, 3> p{};
  for (int i = 0; i < 3; ++i) {
    p[i] = -(rt[i * 3 + 0] * t(0, 3) + rt[i * 3 + 1] * t(1, 3) +
             rt[i * 3 + 2] * t(2, 3));
  }
  return RigidTransform::from_rotation_translation(rt, p);
}

PoseChain invert_chain(const PoseChain& chain) {
  PoseChain out;
  out.reserve(chain.size());
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    const FrameLabel label = parse_frame_label(it->label);
    out.push_back({make_frame_label(label.source, label.target),
                   invert_transform(it->transform)});
  }
  return out;
}

std::array<double, 12> projection_matrix(const IntrinsicMatrix& k,
                                         const RigidTransform& t) {
  std::array<double, 12> p{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (int m = 0; m < 4; ++m) acc += k(i, m) * t(m, j);
      p[i * 4 + j] = acc;
    }
  }
  return p;
}

std::vector<ProjectedPoint> project_points(const PointCloud& cloud,
                                           const IntrinsicMatrix& k,
                                           const RigidTransform& t,
                                           const ImagePlane& plane) {
  const auto p = projection_matrix(k, t);
  const double width = plane.width;
  const double height = plane.height;
  std::vector<ProjectedPoint> out;
  out.reserve(cloud.size());
  const auto& pts = cloud.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point3& q = pts[i];
    const double depth = p[8] * q.x + p[9] * q.y + p[10] * q.z + p[11];
    if (!(depth > 0.0)) continue;
    const double u = (p[0] * q.x + p[1] * q.y + p[2] * q.z + p[3]) / depth;
    const double v = (p[4] * q.x + p[5] * q.y + p[6] * q.z + p[7]) / depth;
    if (u >= 0.0 && u < width && v >= 0.0 && v < height) {
      out.push_back({i, u, v, depth});
    }
  }
  return out;
}

std::array<Point3, 8> box3d_corners(const BoundingBox3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  std::array<Point3, 8> corners{};
  for (int i = 0; i < 8; ++i) {
    const double dx = ((i & 1) ? 0.5 : -0.5) * box.length;
    const double dy = ((i & 2) ? 0.5 : -0.5) * box.width;
    const double dz = ((i & 4) ? 0.5 : -0.5) * box.height;
    corners[i] = Point3{box.cx + c * dx - s * dy, box.cy + s * dx + c * dy,
                        box.cz + dz, 0.0};
  }
  return corners;
}

bool box3d_contains(const BoundingBox3D& box, const Point3& p) noexcept {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double rx = p.x - box.cx;
  const double ry = p.y - box.cy;
  const double local_x = c * rx + s * ry;
  const double local_y = -s * rx + c * ry;
  const double local_z = p.z - box.cz;
  return std::abs(local_x) < 0.5 * box.length &&
         std::abs(local_y) < 0.5 * box.width &&
         std::abs(local_z) < 0.5 * box.height;
}

BoundingBox2D project_box3d(const BoundingBox3D& box, const IntrinsicMatrix& k,
                            const RigidTransform& t, const ImagePlane& plane) {
  const auto p = projection_matrix(k, t);
  double u_min = std::numeric_limits<double>::infinity();
  double v_min = u_min;
  double u_max = -u_min;
  double v_max = -u_min;
  int visible = 0;
  for (const Point3& q : box3d_corners(box)) {
    const double depth = p[8] * q.x + p[9] * q.y + p[10] * q.z + p[11];
    if (!(depth > 0.0)) continue;
    const double u = (p[0] * q.x + p[1] * q.y + p[2] * q.z + p[3]) / depth;
    const double v = (p[4] * q.x + p[5] * q.y + p[6] * q.z + p[7]) / depth;
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
    v_min = std::min(v_min, v);
    v_max = std::max(v_max, v);
    ++visible;
  }
  if (visible == 0) throw BoxNotVisibleError("3D box lies entirely behind the camera");
  const double w = plane.width;
  const double h = plane.height;
  BoundingBox2D out{std::clamp(u_min, 0.0, w), std::clamp(v_min, 0.0, h),
                    std::clamp(u_max, 0.0, w), std::clamp(v_max, 0.0, h),
                    box.class_id};
  if (!(out.x1 < out.x2) || !(out.y1 < out.y2)) {
    throw BoxNotVisibleError("3D box projects outside the image");
  }
  return out;
}

std::vector<std::size_t> points_in_box2d(std::span<const ProjectedPoint> projected,
                                         const BoundingBox2D& box) {
  std::vector<std::size_t> out;
  for (const ProjectedPoint& p : projected) {
    if (strictly_inside(p, box)) out.push_back(p.source_index);
  }
  return out;
}

std::vector<std::size_t> projected_rows_in_box2d(
    std::span<const ProjectedPoint> projected, const BoundingBox2D& box) {
  std::vector<std::size_t> out;
  for (std::size_t row = 0; row < projected.size(); ++row) {
    if (strictly_inside(projected[row], box)) out.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration text

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value,
                                 std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string format_calibration(const Calibration& calib) {
  std::string out = "K:";
  for (double v : calib.intrinsics.entries()) {
    out += ' ';
    out += format_double(v);
  }
  out += '\n';
  for (const PoseStage& stage : calib.chain) {
    out += "T ";
    out += stage.label;
    out += ':';
    for (double v : stage.transform.entries()) {
      out += ' ';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

namespace {

template <std::size_t N>
std::array<double, N> parse_floats(std::string_view body, const std::string& file,
                                   std::uint64_t line_offset,
                                   std::size_t body_offset) {
  std::array<double, N> out{};
  std::size_t pos = 0;
  for (std::size_t i = 0; i < N; ++i) {
    while (pos < body.size() && (body[pos] == ' ' || body[pos] == '\t')) ++pos;
    const char* first = body.data() + pos;
    const char* last = body.data() + body.size();
    const auto res = std::from_chars(first, last, out[i]);
    if (res.ec != std::errc{} || (res.ptr != last && *res.ptr != ' ' && *res.ptr != '\t')) {
      throw ParseError(file, line_offset + body_offset + pos,
                       "expected " + std::to_string(N) + " floats, value " +
                           std::to_string(i) + " is malformed");
    }
    pos = static_cast<std::size_t>(res.ptr - body.data());
  }
  while (pos < body.size() && (body[pos] == ' ' || body[pos] == '\t' || body[pos] == '\r')) ++pos;
  if (pos != body.size()) {
    throw ParseError(file, line_offset + body_offset + pos,
                     "trailing content after " + std::to_string(N) + " floats");
  }
  return out;
}

}  // namespace

Calibration parse_calibration(std::string_view text, const std::string& file_name) {
  std::optional<IntrinsicMatrix> intrinsics;
  PoseChain chain;
  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(offset, end - offset);
    const std::uint64_t line_offset = offset;
    offset = end + 1;
    if (line.empty() || line == "\r") continue;

    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError(file_name, line_offset, "line has no ':' separator");
    }
    const std::string_view head = line.substr(0, colon);
    const std::string_view body = line.substr(colon + 1);
    try {
      if (head == "K") {
        if (intrinsics) throw ParseError(file_name, line_offset, "duplicate K line");
        if (!chain.empty()) {
          throw ParseError(file_name, line_offset, "K line must precede T lines");
        }
        intrinsics.emplace(parse_floats<12>(body, file_name, line_offset, colon + 1));
      } else if (head.size() > 2 && head.substr(0, 2) == "T ") {
        std::string label(head.substr(2));
        parse_frame_label(label);
        chain.push_back({std::move(label),
                         RigidTransform(parse_floats<16>(body, file_name,
                                                         line_offset, colon + 1))});
      } else {
        throw ParseError(file_name, line_offset,
                         "unknown record '" + std::string(head) + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(file_name, line_offset, e.what());
    }
  }
  if (!intrinsics) throw ParseError(file_name, text.size(), "missing K line");
  if (chain.empty()) throw ParseError(file_name, text.size(), "missing T lines");
  return Calibration{*intrinsics, std::move(chain)};
}

}  // namespace boxprior::geometry
