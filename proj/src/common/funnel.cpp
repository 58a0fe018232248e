#include "livemath/funnel.hpp"

#include <fmt/format.h>

#include "livemath/error.hpp"

namespace livemath {

void FunnelReport::add(std::string name, std::size_t in, std::size_t out) {
  if (out > in) throw ArgumentError(fmt::format("stage {} emits {} of {} inputs", name, out, in));
  if (!stages_.empty() && stages_.back().out != in) {
    throw ArgumentError(fmt::format("stage {} takes {} but {} emitted {}", name, in,
                                    stages_.back().name, stages_.back().out));
  }
  stages_.push_back({std::move(name), in, out});
}

OrderedJson FunnelReport::to_json() const {
  OrderedJson arr = OrderedJson::array();
  for (const auto& s : stages_) {
    arr.push_back({{"stage", s.name}, {"in", s.in}, {"out", s.out}, {"removed", s.removed()}});
  }
  return arr;
}

FunnelReport FunnelReport::from_json(const Json& j) {
  FunnelReport r;
  try {
    for (const auto& s : j) {
      r.add(s.at("stage").get<std::string>(), s.at("in").get<std::size_t>(),
            s.at("out").get<std::size_t>());
    }
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed funnel report: ") + e.what());
  }
  return r;
}

}  // namespace livemath
