#pragma once

// Assertions over a finished event log.
//
// Selectors: `kind` or `kind[key=value,key2=a|b]`; `*` matches any kind.
// A payload array matches when any element equals the value.
//
// Assertion objects (JSON):
//   {"type": "before",   "a": SEL, "b": SEL, "per": FIELD?, "mode": "first"|"all", "strict": bool}
//   {"type": "overlaps", "a_start": SEL, "a_end": SEL, "b_start": SEL, "b_end": SEL, "per": FIELD?}
//   {"type": "absent",   "a": SEL, "from": T?, "to": T?}
//   {"type": "count",    "a": SEL, "min": N?, "max": N?, "from": T?, "to": T?}
//   {"type": "bound",    "a": SEL, "field": NAME, "min": X?, "max": X?}
// T is seconds or "step:<label>" (time of that script step).

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsim/sim_kernel.hpp"

namespace qsim {

struct Selector {
  std::string kind;
  std::vector<std::pair<std::string, std::vector<std::string>>> fields;

  static Selector parse(const std::string& text);
  bool matches(const SimEvent& e) const;
};

bool field_matches(const SimEvent& e, const std::string& key, const std::string& value);

struct AssertionResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Throws SchemaError for malformed assertions; never touches a simulation.
std::vector<AssertionResult> verify(const EventLog& log, const nlohmann::json& assertions);

}  // namespace qsim
