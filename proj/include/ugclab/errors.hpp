#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ugclab {

/// Base of every error thrown by the library. The CLI maps each subclass to
/// its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or unknown configuration value (tokenizer id, smoothing constant, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File missing, unreadable, or unwritable.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed UTF-8 input.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t byte_offset)
      : Error(what + " at byte offset " + std::to_string(byte_offset)),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Input data that violates a documented schema or precondition: parallel
/// files of different lengths, a missing corpus side, an index out of range.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during model training.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long batch_index)
      : Error(what), batch_index_(batch_index) {}
  long batch_index() const { return batch_index_; }

 private:
  long batch_index_;
};

}  // namespace ugclab
