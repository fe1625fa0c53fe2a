#include "mtldoc/types.hpp"

#include <charconv>

#include "mtldoc/error.hpp"

namespace mtldoc {

std::string to_string(Source s) { return s == Source::S1 ? "S1" : "S2"; }

Source parse_source(std::string_view text) {
  if (text == "S1" || text == "s1") return Source::S1;
  if (text == "S2" || text == "s2") return Source::S2;
  throw Error("unknown source '" + std::string(text) + "'");
}

// "S1:7" for an original task, "S2:pool(7)" for the pooled column of S1 class 7.
std::string to_string(const TaskId& id) {
  const std::string cls = std::to_string(id.class_id);
  return to_string(id.source) + ":" + (id.pooled ? "pool(" + cls + ")" : cls);
}

TaskId parse_task_id(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw Error("bad task id '" + std::string(text) + "'");
  TaskId id;
  id.source = parse_source(text.substr(0, colon));
  std::string_view rest = text.substr(colon + 1);
  if (rest.starts_with("pool(") && rest.ends_with(")")) {
    id.pooled = true;
    rest = rest.substr(5, rest.size() - 6);
  }
  const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), id.class_id);
  if (ec != std::errc() || ptr != rest.data() + rest.size()) {
    throw Error("bad task id '" + std::string(text) + "'");
  }
  return id;
}

}  // namespace mtldoc
