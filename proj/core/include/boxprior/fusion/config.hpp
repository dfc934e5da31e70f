#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace boxprior::fusion {

/// Network shape. Defaults are the desk-scale toy configuration.
struct ModelConfig {
  std::size_t layers = 3;                          ///< L
  std::vector<std::size_t> layer_widths{16, 16, 16};  ///< D_l, one per layer
  std::size_t hidden = 32;                         ///< D
  std::size_t heads = 2;                           ///< h
  std::size_t classes = 4;                         ///< c
  double epsilon_cosine = 1e-8;

  /// Throws InvalidArgument on inconsistent values.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  std::uint64_t seed = 7;
  int epochs = 300;
  int batch_size = 8;
  double learning_rate = 0.3;
  double lambda = 0.1;
  ModelConfig model;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Parses `key = value` lines. Recognised keys: seed, epochs, batch_size,
/// learning_rate, lambda, L, D_l (comma or space separated; a single value
/// is repeated for every layer), D, heads, classes, epsilon_cosine. Blank
/// lines and `#` comments are ignored. Throws ParseError on unknown keys or
/// malformed values and InvalidArgument when the result is inconsistent.
TrainConfig parse_train_config(std::string_view text,
                               const std::string& file_name = "config");
TrainConfig load_train_config(const std::filesystem::path& path);
std::string format_train_config(const TrainConfig& config);

}  // namespace boxprior::fusion
