#include <charconv>
#include <fstream>
#include <iterator>

#include "boxprior/errors.hpp"
#include "boxprior/fusion/training.hpp"

// Text model file:
//
//   boxprior-model 1
//   <training config, key = value>
//   tensors
//   <name> <rows> <cols> <value> ...      one line per tensor

namespace boxprior::fusion {
namespace {

constexpr std::string_view kMagic = "boxprior-model 1";
constexpr std::string_view kTensorsMarker = "tensors";

class Cursor {
 public:
  Cursor(std::string_view text, const std::string& file, std::size_t base)
      : text_(text), file_(file), base_(base) {}

  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }

  std::string_view token() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
    if (start == pos_) fail(start, "unexpected end of file");
    return text_.substr(start, pos_ - start);
  }

  template <class T>
  T number() {
    skip_space();
    const std::size_t start = pos_;
    const std::string_view tok = token();
    T value{};
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
      fail(start, "malformed number '" + std::string(tok) + "'");
    }
    return value;
  }

  std::size_t offset() const noexcept { return pos_; }
  [[noreturn]] void fail(std::size_t at, const std::string& what) const {
    throw ParseError(file_, base_ + at, what);
  }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\n' || c == '\r' || c == '\t'; }
  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }

  std::string_view text_;
  std::string file_;
  std::size_t base_ = 0;
  std::size_t pos_ = 0;
};

}  // namespace

std::string format_model(const TrainConfig& config, const ModelParams& params) {
  std::string out(kMagic);
  out += '\n';
  out += format_train_config(config);
  out += kTensorsMarker;
  out += '\n';
  ModelParams copy = params;
  for_each_tensor(copy, [&](const std::string& name, Matrix& m) {
    out += name + ' ' + std::to_string(m.rows()) + ' ' + std::to_string(m.cols());
    for (double v : m.data()) {
      out += ' ';
      out += geometry::format_double(v);
    }
    out += '\n';
  });
  return out;
}

void save_model(const std::filesystem::path& path, const TrainConfig& config,
                const ModelParams& params) {
  const std::string text = format_model(config, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

LoadedModel parse_model(std::string_view text, const std::string& file_name) {
  if (text.substr(0, kMagic.size()) != kMagic) {
    throw ParseError(file_name, 0, "not a model file (missing '" + std::string(kMagic) + "')");
  }
  const std::size_t marker = text.find("\n" + std::string(kTensorsMarker) + "\n");
  if (marker == std::string_view::npos) {
    throw ParseError(file_name, text.size(), "missing tensor section");
  }
  const std::size_t config_start = kMagic.size();
  LoadedModel model;
  model.config =
      parse_train_config(text.substr(config_start, marker + 1 - config_start), file_name);
  model.params = init_model(model.config.model, 0);

  const std::size_t body_start = marker + kTensorsMarker.size() + 2;
  Cursor cur(text.substr(body_start), file_name, body_start);
  for_each_tensor(model.params, [&](const std::string& name, Matrix& m) {
    const std::size_t at = cur.offset();
    if (cur.token() != name) cur.fail(at, "expected tensor '" + name + "'");
    const auto rows = cur.number<std::size_t>();
    const auto cols = cur.number<std::size_t>();
    if (rows != m.rows() || cols != m.cols()) {
      cur.fail(at, name + " is " + std::to_string(rows) + "x" + std::to_string(cols) +
                       ", config expects " + m.shape_string());
    }
    for (double& v : m.data()) v = cur.number<double>();
  });
  if (!cur.at_end()) cur.fail(cur.offset(), "trailing content");
  return model;
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_model(text, path.filename().string());
}

}  // namespace boxprior::fusion
