#pragma once

#include <stdexcept>
#include <string>

namespace livemath {

/// Base of every exception thrown by the toolkit. `kind()` is the short
/// machine-readable name written into CLI error records.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define LIVEMATH_DEFINE_ERROR(Name, tag)                                      \
  class Name : public Error {                                                 \
   public:                                                                    \
    explicit Name(const std::string& what) : Error(tag, what) {}              \
  };

LIVEMATH_DEFINE_ERROR(ArgumentError, "argument")
LIVEMATH_DEFINE_ERROR(ConfigError, "config")
LIVEMATH_DEFINE_ERROR(InputError, "input")
LIVEMATH_DEFINE_ERROR(IoError, "io")
LIVEMATH_DEFINE_ERROR(TransportError, "transport")
LIVEMATH_DEFINE_ERROR(RequestError, "request")
LIVEMATH_DEFINE_ERROR(FixtureError, "fixture")
LIVEMATH_DEFINE_ERROR(StageParseError, "stage_parse")
LIVEMATH_DEFINE_ERROR(ExtractError, "extract")

#undef LIVEMATH_DEFINE_ERROR

/// Replay backend had no recorded response for a request tag.
class MockMissError : public Error {
 public:
  explicit MockMissError(std::string tag)
      : Error("mock_miss", "no recorded response for request tag '" + tag + "'"),
        tag_(std::move(tag)) {}
  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

}  // namespace livemath
