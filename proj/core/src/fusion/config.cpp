#include "boxprior/fusion/config.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include "boxprior/errors.hpp"
#include "boxprior/geometry.hpp"

namespace boxprior::fusion {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(std::string_view text, const std::string& file, std::size_t offset,
               std::string_view key) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ParseError(file, offset,
                     "malformed value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

}  // namespace

void ModelConfig::validate() const {
  if (layers == 0) throw InvalidArgument("L must be at least 1");
  if (layer_widths.size() != layers) {
    throw InvalidArgument("D_l lists " + std::to_string(layer_widths.size()) +
                          " widths for L = " + std::to_string(layers));
  }
  for (std::size_t w : layer_widths) {
    if (w == 0) throw InvalidArgument("layer widths must be positive");
  }
  if (hidden == 0) throw InvalidArgument("D must be positive");
  if (heads == 0 || hidden % heads != 0) {
    throw InvalidArgument("D = " + std::to_string(hidden) + " is not divisible by heads = " +
                          std::to_string(heads));
  }
  if (classes < 2) throw InvalidArgument("need at least two classes");
  if (!(epsilon_cosine > 0.0)) throw InvalidArgument("epsilon_cosine must be positive");
}

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw InvalidArgument("learning_rate must be >= 0");
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
}

TrainConfig parse_train_config(std::string_view text, const std::string& file_name) {
  TrainConfig cfg;
  bool widths_given = false;
  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string_view::npos) end = text.size();
    const std::size_t line_offset = offset;
    std::string_view line = text.substr(offset, end - offset);
    offset = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(file_name, line_offset, "expected key = value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key == "seed") {
      cfg.seed = parse_number<std::uint64_t>(value, file_name, line_offset, key);
    } else if (key == "epochs") {
      cfg.epochs = parse_number<int>(value, file_name, line_offset, key);
    } else if (key == "batch_size") {
      cfg.batch_size = parse_number<int>(value, file_name, line_offset, key);
    } else if (key == "learning_rate") {
      cfg.learning_rate = parse_number<double>(value, file_name, line_offset, key);
    } else if (key == "lambda") {
      cfg.lambda = parse_number<double>(value, file_name, line_offset, key);
    } else if (key == "L") {
      cfg.model.layers = parse_number<std::size_t>(value, file_name, line_offset, key);
    } else if (key == "D_l") {
      cfg.model.layer_widths.clear();
      std::string list(value);
      for (char& ch : list) {
        if (ch == ',') ch = ' ';
      }
      std::istringstream in(list);
      std::string item;
      while (in >> item) {
        cfg.model.layer_widths.push_back(
            parse_number<std::size_t>(item, file_name, line_offset, key));
      }
      if (cfg.model.layer_widths.empty()) {
        throw ParseError(file_name, line_offset, "D_l needs at least one width");
      }
      widths_given = true;
    } else if (key == "D") {
      cfg.model.hidden = parse_number<std::size_t>(value, file_name, line_offset, key);
    } else if (key == "heads") {
      cfg.model.heads = parse_number<std::size_t>(value, file_name, line_offset, key);
    } else if (key == "classes") {
      cfg.model.classes = parse_number<std::size_t>(value, file_name, line_offset, key);
    } else if (key == "epsilon_cosine") {
      cfg.model.epsilon_cosine = parse_number<double>(value, file_name, line_offset, key);
    } else {
      throw ParseError(file_name, line_offset, "unknown key '" + std::string(key) + "'");
    }
  }
  auto& widths = cfg.model.layer_widths;
  if (!widths_given || widths.size() == 1) widths.assign(cfg.model.layers, widths.front());
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_train_config(text, path.filename().string());
}

std::string format_train_config(const TrainConfig& config) {
  std::string widths;
  for (std::size_t i = 0; i < config.model.layer_widths.size(); ++i) {
    if (i > 0) widths += ',';
    widths += std::to_string(config.model.layer_widths[i]);
  }
  std::string out;
  out += "seed = " + std::to_string(config.seed) + "\n";
  out += "epochs = " + std::to_string(config.epochs) + "\n";
  out += "batch_size = " + std::to_string(config.batch_size) + "\n";
  out += "learning_rate = " + geometry::format_double(config.learning_rate) + "\n";
  out += "lambda = " + geometry::format_double(config.lambda) + "\n";
  out += "L = " + std::to_string(config.model.layers) + "\n";
  out += "D_l = " + widths + "\n";
  out += "D = " + std::to_string(config.model.hidden) + "\n";
  out += "heads = " + std::to_string(config.model.heads) + "\n";
  out += "classes = " + std::to_string(config.model.classes) + "\n";
  out += "epsilon_cosine = " + geometry::format_double(config.model.epsilon_cosine) + "\n";
  return out;
}

}  // namespace boxprior::fusion
