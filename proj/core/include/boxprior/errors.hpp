#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace boxprior {

/// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pose chain whose adjacent stages do not share a frame.
class ChainError : public Error {
 public:
  using Error::Error;
};

/// A 3D box that leaves no visible footprint on the image.
class BoxNotVisibleError : public Error {
 public:
  using Error::Error;
};

/// Matrix / layer dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Class label outside [0, c).
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Probability rows that do not sum to one.
class NormalizationError : public Error {
 public:
  using Error::Error;
};

/// A loss or objective evaluated to a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Batch with no usable (non-empty) box, so the objective is undefined.
class LossUndefinedError : public Error {
 public:
  using Error::Error;
};

/// Scene generator gave up after its retry budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Invalid domain value (non-rigid transform, bad intrinsics, bad config...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. Carries the file name and byte offset.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::uint64_t offset, const std::string& what)
      : Error(file + ": " + what + " (byte offset " + std::to_string(offset) +
              ")"),
        file_(std::move(file)),
        offset_(offset) {}

  const std::string& file() const noexcept { return file_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::string file_;
  std::uint64_t offset_;
};

/// Files that parse individually but disagree with each other.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure, with the offending path in the message.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace boxprior
