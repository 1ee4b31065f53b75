#pragma once

// Line lookup for parsed JSON documents. nlohmann::json does not keep source
// positions, so we record the line of every '{' in textual order; a pre-order
// walk of an ordered_json visits objects in the same order.

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qsim/common.hpp"

namespace qsim::detail {

class ObjectLines {
 public:
  explicit ObjectLines(std::string_view text) {
    int line = 1;
    bool in_string = false;
    bool escaped = false;
    for (char c : text) {
      if (c == '\n') ++line;
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') in_string = true;
      if (c == '{') lines_.push_back(line);
    }
  }

  // Line of the n-th object in document order, or 0 when out of range.
  int line_of(std::size_t ordinal) const {
    return ordinal < lines_.size() ? lines_[ordinal] : 0;
  }

 private:
  std::vector<int> lines_;
};

inline nlohmann::ordered_json parse_json_or_throw(std::string_view text, const std::string& source) {
  try {
    return nlohmann::ordered_json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    // byte offset -> line
    int line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') ++line;
    }
    fail(ErrorCode::SchemaError, source + ":" + std::to_string(line) + ": " + e.what());
  }
}

}  // namespace qsim::detail
