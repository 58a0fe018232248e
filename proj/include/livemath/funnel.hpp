#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "livemath/io.hpp"

namespace livemath {

struct FunnelStage {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;

  std::size_t removed() const { return in - out; }
  friend bool operator==(const FunnelStage&, const FunnelStage&) = default;
};

/// Ordered filter stages where each stage consumes what the previous one
/// emitted. add() throws ArgumentError if a stage grows its input or does not
/// chain onto the previous stage's output.
class FunnelReport {
 public:
  void add(std::string name, std::size_t in, std::size_t out);

  const std::vector<FunnelStage>& stages() const { return stages_; }
  std::size_t input() const { return stages_.empty() ? 0 : stages_.front().in; }
  std::size_t output() const { return stages_.empty() ? 0 : stages_.back().out; }

  /// [{"stage", "in", "out", "removed"}, ...]
  OrderedJson to_json() const;
  static FunnelReport from_json(const Json& j);

  friend bool operator==(const FunnelReport&, const FunnelReport&) = default;

 private:
  std::vector<FunnelStage> stages_;
};

}  // namespace livemath
