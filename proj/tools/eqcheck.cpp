// eqcheck <a> <b>: prints the equivalence verdict as JSON; exit 0 when the
// answers are equivalent, 1 when not, 2 on usage errors.
#include <iostream>

#include <nlohmann/json.hpp>

#include "livemath/answer.hpp"

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: eqcheck <answer-a> <answer-b>\n";
    return 2;
  }
  namespace la = livemath::answer;
  auto verdict = la::equivalent(argv[1], argv[2]);
  nlohmann::ordered_json out;
  out["a"] = argv[1];
  out["b"] = argv[2];
  out["equivalent"] = verdict.equivalent;
  out["method"] = la::to_string(verdict.method);
  out["detail"] = verdict.detail;
  out["type_a"] = la::to_string(la::classify_answer_type(argv[1]));
  out["type_b"] = la::to_string(la::classify_answer_type(argv[2]));
  std::cout << out.dump() << '\n';
  return verdict.equivalent ? 0 : 1;
}
