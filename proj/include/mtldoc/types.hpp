#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace mtldoc {

using ClassId = std::int64_t;

enum class Source : std::uint8_t { S1 = 0, S2 = 1 };

inline Source other(Source s) { return s == Source::S1 ? Source::S2 : Source::S1; }

std::string to_string(Source s);
Source parse_source(std::string_view text);

// Identifies one column of a model matrix. Original tasks are one-vs-rest
// problems over `source`; a pooled column holds the neighborhood model that
// class `class_id` of other(source) is coupled to, trained on `source` data.
struct TaskId {
  Source source = Source::S1;
  ClassId class_id = 0;
  bool pooled = false;

  auto operator<=>(const TaskId&) const = default;
};

std::string to_string(const TaskId& id);
TaskId parse_task_id(std::string_view text);

}  // namespace mtldoc
