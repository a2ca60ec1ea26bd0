#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ngan {

// Base for every error the library raises. kind() is a stable, machine-parsable
// class name; what() carries the human detail.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& detail)
      : std::runtime_error(detail), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define NGAN_DEFINE_ERROR(Name)                                           \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& detail) : Error(#Name, detail) {}    \
  }

NGAN_DEFINE_ERROR(ShapeError);
NGAN_DEFINE_ERROR(FormatError);
NGAN_DEFINE_ERROR(GeometryError);
NGAN_DEFINE_ERROR(ConfigError);
NGAN_DEFINE_ERROR(DataError);
NGAN_DEFINE_ERROR(PlacementError);
NGAN_DEFINE_ERROR(UndefinedMetricError);
NGAN_DEFINE_ERROR(IoError);

#undef NGAN_DEFINE_ERROR

}  // namespace ngan
