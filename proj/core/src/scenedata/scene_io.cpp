#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iterator>
#include <limits>

#include "boxprior/errors.hpp"
#include "boxprior/scenedata.hpp"

namespace boxprior::scenedata {
namespace fs = std::filesystem;
namespace {

constexpr std::size_t kPointRecordBytes = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return bytes;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string as_text(const std::vector<std::uint8_t>& bytes) {
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace

std::vector<std::uint8_t> encode_points(const geometry::PointCloud& cloud) {
  std::vector<std::uint8_t> out;
  out.reserve(cloud.size() * kPointRecordBytes);
  for (const auto& p : cloud.points) {
    for (double v : {p.x, p.y, p.z, p.intensity}) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

geometry::PointCloud decode_points(std::span<const std::uint8_t> bytes) {
  const std::size_t whole = bytes.size() / kPointRecordBytes;
  if (bytes.size() % kPointRecordBytes != 0) {
    throw ParseError("points.bin", whole * kPointRecordBytes,
                     "truncated point record (" +
                         std::to_string(bytes.size() % kPointRecordBytes) + " of " +
                         std::to_string(kPointRecordBytes) + " bytes)");
  }
  geometry::PointCloud cloud;
  cloud.points.reserve(whole);
  for (std::size_t i = 0; i < whole; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kPointRecordBytes;
    float v[4];
    for (int j = 0; j < 4; ++j) v[j] = std::bit_cast<float>(get_u32(rec + 4 * j));
    cloud.points.push_back({v[0], v[1], v[2], v[3]});
  }
  return cloud;
}

std::vector<std::uint8_t> encode_labels(std::span<const int> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(labels.size() * 4);
  for (int label : labels) {
    if (label < 0) throw InvalidArgument("negative class label");
    put_u32(out, static_cast<std::uint32_t>(label));
  }
  return out;
}

std::vector<int> decode_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) {
    throw ParseError("labels.bin", bytes.size() / 4 * 4, "truncated label record");
  }
  std::vector<int> out;
  out.reserve(bytes.size() / 4);
  for (std::size_t off = 0; off < bytes.size(); off += 4) {
    const std::uint32_t v = get_u32(bytes.data() + off);
    if (v > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
      throw ParseError("labels.bin", off, "label out of range");
    }
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string format_boxes(std::span<const geometry::BoundingBox3D> boxes) {
  std::string out;
  for (const auto& b : boxes) {
    for (double v : {b.cx, b.cy, b.cz, b.width, b.length, b.height, b.yaw}) {
      out += geometry::format_double(v);
      out += ' ';
    }
    out += std::to_string(b.class_id);
    out += '\n';
  }
  return out;
}

std::vector<geometry::BoundingBox3D> parse_boxes(std::string_view text) {
  std::vector<geometry::BoundingBox3D> out;
  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string_view::npos) end = text.size();
    const std::size_t line_start = offset;
    std::string_view line = text.substr(offset, end - offset);
    offset = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    double v[7];
    int class_id = 0;
    std::size_t pos = 0;
    auto skip_ws = [&] {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    };
    for (int i = 0; i < 8; ++i) {
      skip_ws();
      const char* first = line.data() + pos;
      const char* last = line.data() + line.size();
      const auto res = i < 7 ? std::from_chars(first, last, v[i])
                             : std::from_chars(first, last, class_id);
      if (res.ec != std::errc{} || (res.ptr != last && *res.ptr != ' ' && *res.ptr != '\t')) {
        throw ParseError("boxes.txt", line_start + pos,
                         "field " + std::to_string(i) + " is malformed");
      }
      pos = static_cast<std::size_t>(res.ptr - line.data());
    }
    skip_ws();
    if (pos != line.size()) throw ParseError("boxes.txt", line_start + pos, "trailing content");
    if (!(v[3] > 0.0 && v[4] > 0.0 && v[5] > 0.0)) {
      throw ParseError("boxes.txt", line_start, "box sizes must be positive");
    }
    if (class_id < 0) throw ParseError("boxes.txt", line_start, "negative class id");
    out.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], class_id});
  }
  return out;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) { throw ParseError("image.ppm", pos, what); };
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() {
    skip_space_and_comments();
    const char* first = reinterpret_cast<const char*>(bytes.data()) + pos;
    const char* last = reinterpret_cast<const char*>(bytes.data()) + bytes.size();
    int value = 0;
    const auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc{}) fail("expected an integer in the PPM header");
    pos += static_cast<std::size_t>(res.ptr - first);
    return value;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') fail("missing P6 magic");
  pos = 2;
  const int width = read_int();
  const int height = read_int();
  const int maxval = read_int();
  if (width <= 0 || height <= 0) fail("image dimensions must be positive");
  if (maxval != 255) fail("only 8-bit PPM (maxval 255) is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("expected whitespace after maxval");
  ++pos;
  RgbImage image(width, height);
  if (bytes.size() - pos < image.pixels.size()) {
    pos = bytes.size();
    fail("pixel data truncated: expected " + std::to_string(image.pixels.size()) + " bytes");
  }
  if (bytes.size() - pos > image.pixels.size()) {
    pos += image.pixels.size();
    fail("trailing bytes after pixel data");
  }
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), image.pixels.begin());
  return image;
}

void write_scene(const SceneBundle& bundle, const fs::path& dir) {
  if (bundle.labels.size() != bundle.cloud.size()) {
    throw ConsistencyError("scene has " + std::to_string(bundle.cloud.size()) + " points but " +
                           std::to_string(bundle.labels.size()) + " labels");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "points.bin", encode_points(bundle.cloud));
  write_file(dir / "labels.bin", encode_labels(bundle.labels));
  write_text(dir / "calib.txt", geometry::format_calibration(bundle.calibration));
  write_text(dir / "boxes.txt", format_boxes(bundle.boxes3d));
  write_file(dir / "image.ppm", encode_ppm(bundle.image));
}

SceneBundle read_scene(const fs::path& dir) {
  SceneBundle scene;
  scene.cloud = decode_points(read_file(dir / "points.bin"));
  scene.labels = decode_labels(read_file(dir / "labels.bin"));
  if (scene.labels.size() != scene.cloud.size()) {
    throw ConsistencyError(dir.string() + ": points.bin has " +
                           std::to_string(scene.cloud.size()) + " points but labels.bin has " +
                           std::to_string(scene.labels.size()) + " labels");
  }
  scene.calibration =
      geometry::parse_calibration(as_text(read_file(dir / "calib.txt")), "calib.txt");
  try {
    (void)geometry::compose_chain(scene.calibration.chain);
  } catch (const ChainError& e) {
    throw ParseError("calib.txt", 0, e.what());
  }
  scene.boxes3d = parse_boxes(as_text(read_file(dir / "boxes.txt")));
  scene.image = decode_ppm(read_file(dir / "image.ppm"));
  scene.boxes2d = derive_boxes2d(scene.boxes3d, scene.calibration, scene.image.plane());
  return scene;
}

}  // namespace boxprior::scenedata
