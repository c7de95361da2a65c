#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gsray {

/// Density amplitude does not exceed the truncation threshold, so the primitive has no support.
class EmptyIsosurface : public std::domain_error {
 public:
  EmptyIsosurface() : std::domain_error("density amplitude <= truncation threshold: empty isosurface") {}
};

class EmptyScene : public std::invalid_argument {
 public:
  EmptyScene() : std::invalid_argument("scene has no primitives") {}
};

/// More primitives overlap a query segment than the hit buffer can hold.
class BufferOverflow : public std::length_error {
 public:
  explicit BufferOverflow(std::size_t capacity)
      : std::length_error("hit buffer overflow (capacity " + std::to_string(capacity) + ")"),
        capacity_(capacity) {}
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
};

class DegenerateCenter : public std::domain_error {
 public:
  DegenerateCenter() : std::domain_error("point coincides with the camera center") {}
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invariant violation found while validating loaded data; carries the offending record.
class ValidationError : public std::runtime_error {
 public:
  static constexpr std::size_t kNoRecord = static_cast<std::size_t>(-1);

  ValidationError(const std::string& what, std::size_t record = kNoRecord)
      : std::runtime_error(record == kNoRecord ? what
                                               : "record " + std::to_string(record) + ": " + what),
        record_(record) {}
  std::size_t record() const { return record_; }

 private:
  std::size_t record_;
};

}  // namespace gsray
