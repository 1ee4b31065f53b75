#include "qsim/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace qsim {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

[[noreturn]] void malformed(const std::string& what) { fail(ErrorCode::SchemaError, "malformed assertion: " + what); }

std::string element_text(const nlohmann::ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

Selector Selector::parse(const std::string& text) {
  Selector s;
  const auto t = trim(text);
  const auto lb = t.find('[');
  if (lb == std::string::npos) {
    s.kind = t;
  } else {
    if (t.back() != ']') malformed("selector '" + text + "' lacks a closing ']'");
    s.kind = trim(t.substr(0, lb));
    const std::string inner = t.substr(lb + 1, t.size() - lb - 2);
    for (const auto& part : split(inner, ',')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos) malformed("selector field '" + part + "' needs key=value");
      const auto key = trim(part.substr(0, eq));
      if (key.empty()) malformed("empty field name in '" + text + "'");
      std::vector<std::string> alts;
      for (const auto& v : split(part.substr(eq + 1), '|')) alts.push_back(trim(v));
      s.fields.emplace_back(key, alts);
    }
  }
  if (s.kind.empty()) malformed("selector '" + text + "' has no event kind");
  for (char c : s.kind) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '*')) {
      malformed("invalid character in event kind '" + s.kind + "'");
    }
  }
  return s;
}

bool field_matches(const SimEvent& e, const std::string& key, const std::string& value) {
  auto it = e.payload.find(key);
  if (it == e.payload.end()) return false;
  if (it->is_array()) {
    return std::any_of(it->begin(), it->end(), [&](const auto& v) { return element_text(v) == value; });
  }
  return element_text(*it) == value;
}

bool Selector::matches(const SimEvent& e) const {
  if (kind != "*" && e.kind != kind) return false;
  for (const auto& [key, alts] : fields) {
    if (std::none_of(alts.begin(), alts.end(), [&](const std::string& v) { return field_matches(e, key, v); })) {
      return false;
    }
  }
  return true;
}

namespace {

const nlohmann::json& need(const nlohmann::json& a, const char* key) {
  if (!a.contains(key)) malformed(std::string("missing '") + key + "' in " + a.dump());
  return a.at(key);
}

Selector sel(const nlohmann::json& a, const char* key) {
  const auto& v = need(a, key);
  if (!v.is_string()) malformed(std::string("'") + key + "' must be a selector string");
  return Selector::parse(v.get<std::string>());
}

double resolve_time(const EventLog& log, const nlohmann::json& v, double fallback) {
  if (v.is_null()) return fallback;
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.rfind("step:", 0) == 0) {
      const auto label = s.substr(5);
      for (const auto& e : log.events()) {
        if (e.kind == "step" && e.field("label") == label) return e.time;
      }
      // unknown label: the window is empty
      return std::numeric_limits<double>::quiet_NaN();
    }
  }
  malformed("time bound must be a number or \"step:<label>\", got " + v.dump());
}

std::vector<const SimEvent*> matching(const EventLog& log, const Selector& s, double from, double to) {
  std::vector<const SimEvent*> out;
  for (const auto& e : log.events()) {
    if (e.time < from || e.time > to) continue;
    if (s.matches(e)) out.push_back(&e);
  }
  return out;
}

std::vector<const SimEvent*> in_group(const std::vector<const SimEvent*>& evs, const std::string& per,
                                      const std::string& g) {
  if (per.empty()) return evs;
  std::vector<const SimEvent*> out;
  for (const auto* e : evs) {
    if (field_matches(*e, per, g)) out.push_back(e);
  }
  return out;
}

std::set<std::string> groups_of(const std::vector<const SimEvent*>& evs, const std::string& per) {
  std::set<std::string> out;
  for (const auto* e : evs) {
    auto it = e->payload.find(per);
    if (it == e->payload.end()) continue;
    if (it->is_array()) {
      for (const auto& v : *it) out.insert(element_text(v));
    } else {
      out.insert(element_text(*it));
    }
  }
  return out;
}

bool precedes(const SimEvent& a, const SimEvent& b, bool strict) {
  if (strict) return a.time < b.time;
  return a.time < b.time || (a.time == b.time && a.seq < b.seq);
}

std::string at(const SimEvent& e) {
  std::ostringstream os;
  os << e.kind << "@" << format_time(e.time) << "#" << e.seq;
  return os.str();
}

AssertionResult check_before(const EventLog& log, const nlohmann::json& a) {
  const auto sa = sel(a, "a");
  const auto sb = sel(a, "b");
  const std::string per = a.value("per", "");
  const std::string mode = a.value("mode", "first");
  if (mode != "first" && mode != "all") malformed("before.mode must be 'first' or 'all'");
  const bool strict = a.value("strict", false);
  const auto inf = std::numeric_limits<double>::infinity();
  const auto all_a = matching(log, sa, -inf, inf);
  const auto all_b = matching(log, sb, -inf, inf);
  AssertionResult r;
  r.pass = true;
  std::vector<std::string> groups{""};
  if (!per.empty()) {
    auto g = groups_of(all_b, per);
    groups.assign(g.begin(), g.end());
  }
  if (all_b.empty()) {
    r.pass = false;
    r.detail = "no events match b";
    return r;
  }
  int checked = 0;
  for (const auto& g : groups) {
    const auto ea = in_group(all_a, per, g);
    const auto eb = in_group(all_b, per, g);
    if (eb.empty()) continue;
    ++checked;
    if (ea.empty()) {
      r.pass = false;
      r.detail = "no a event" + (per.empty() ? "" : " for " + per + "=" + g);
      return r;
    }
    const SimEvent& pivot = mode == "first" ? *ea.front() : *ea.back();
    if (!precedes(pivot, *eb.front(), strict)) {
      r.pass = false;
      r.detail = at(pivot) + " does not precede " + at(*eb.front()) + (per.empty() ? "" : " (" + per + "=" + g + ")");
      return r;
    }
  }
  r.detail = "held for " + std::to_string(checked) + " group(s)";
  return r;
}

AssertionResult check_overlaps(const EventLog& log, const nlohmann::json& a) {
  const auto s1 = sel(a, "a_start");
  const auto e1 = sel(a, "a_end");
  const auto s2 = sel(a, "b_start");
  const auto e2 = sel(a, "b_end");
  const std::string per = a.value("per", "");
  const auto inf = std::numeric_limits<double>::infinity();
  const auto as = matching(log, s1, -inf, inf);
  const auto ae = matching(log, e1, -inf, inf);
  const auto bs = matching(log, s2, -inf, inf);
  const auto be = matching(log, e2, -inf, inf);
  std::vector<std::string> groups{""};
  if (!per.empty()) {
    auto g = groups_of(as, per);
    groups.assign(g.begin(), g.end());
  }
  AssertionResult r;
  if (as.empty()) {
    r.detail = "no events match a_start";
    return r;
  }
  for (const auto& g : groups) {
    const auto gas = in_group(as, per, g);
    const auto gae = in_group(ae, per, g);
    const auto gbs = in_group(bs, per, g);
    const auto gbe = in_group(be, per, g);
    if (gas.empty() || gae.empty() || gbs.empty() || gbe.empty()) {
      r.detail = "incomplete intervals" + (per.empty() ? "" : " for " + per + "=" + g);
      return r;
    }
    const double a0 = gas.front()->time;
    const double a1 = gae.back()->time;
    const double b0 = gbs.front()->time;
    const double b1 = gbe.back()->time;
    if (!(a0 < b1 && b0 < a1)) {
      r.detail = "[" + format_time(a0) + ", " + format_time(a1) + "] and [" + format_time(b0) + ", " +
                 format_time(b1) + "] are disjoint" + (per.empty() ? "" : " (" + per + "=" + g + ")");
      return r;
    }
  }
  r.pass = true;
  r.detail = "held for " + std::to_string(groups.size()) + " group(s)";
  return r;
}

AssertionResult check_count(const EventLog& log, const nlohmann::json& a, bool absent) {
  const auto s = sel(a, "a");
  const auto inf = std::numeric_limits<double>::infinity();
  const double from = resolve_time(log, a.value("from", nlohmann::json()), -inf);
  const double to = resolve_time(log, a.value("to", nlohmann::json()), inf);
  const bool empty_window = std::isnan(from) || std::isnan(to);
  const auto n = empty_window ? 0L : static_cast<long>(matching(log, s, from, to).size());
  AssertionResult r;
  long lo = 0;
  long hi = std::numeric_limits<long>::max();
  if (absent) {
    hi = 0;
  } else {
    if (a.contains("min")) lo = a.at("min").get<long>();
    if (a.contains("max")) hi = a.at("max").get<long>();
    if (!a.contains("min") && !a.contains("max")) malformed("count needs min and/or max");
  }
  r.pass = n >= lo && n <= hi;
  r.detail = std::to_string(n) + " matching event(s)";
  return r;
}

AssertionResult check_bound(const EventLog& log, const nlohmann::json& a) {
  const auto s = sel(a, "a");
  const auto& f = need(a, "field");
  if (!f.is_string()) malformed("bound.field must be a string");
  const auto field = f.get<std::string>();
  if (!a.contains("min") && !a.contains("max")) malformed("bound needs min and/or max");
  const double lo = a.value("min", -std::numeric_limits<double>::infinity());
  const double hi = a.value("max", std::numeric_limits<double>::infinity());
  const auto inf = std::numeric_limits<double>::infinity();
  const auto evs = matching(log, s, -inf, inf);
  AssertionResult r;
  int seen = 0;
  for (const auto* e : evs) {
    // dotted paths reach into nested payload objects
    const nlohmann::ordered_json* v = &e->payload;
    for (const auto& part : split(field, '.')) {
      if (!v->is_object() || !v->contains(part)) {
        v = nullptr;
        break;
      }
      v = &v->at(part);
    }
    if (v == nullptr || !v->is_number()) continue;
    ++seen;
    const double x = v->get<double>();
    if (x < lo || x > hi) {
      r.detail = field + "=" + v->dump() + " out of bounds at " + at(*e);
      return r;
    }
  }
  r.pass = seen > 0;
  r.detail = seen > 0 ? std::to_string(seen) + " value(s) within bounds" : "no event carries " + field;
  return r;
}

}  // namespace

std::vector<AssertionResult> verify(const EventLog& log, const nlohmann::json& assertions) {
  const nlohmann::json* list = &assertions;
  if (assertions.is_object() && assertions.contains("assertions")) list = &assertions.at("assertions");
  if (!list->is_array()) malformed("expected an array of assertions");
  std::vector<AssertionResult> out;
  int index = 0;
  for (const auto& a : *list) {
    ++index;
    if (!a.is_object()) malformed("assertion #" + std::to_string(index) + " is not an object");
    const auto& t = need(a, "type");
    if (!t.is_string()) malformed("assertion type must be a string");
    const auto type = t.get<std::string>();
    AssertionResult r;
    try {
      if (type == "before") {
        r = check_before(log, a);
      } else if (type == "overlaps") {
        r = check_overlaps(log, a);
      } else if (type == "absent") {
        r = check_count(log, a, true);
      } else if (type == "count") {
        r = check_count(log, a, false);
      } else if (type == "bound") {
        r = check_bound(log, a);
      } else {
        malformed("unknown assertion type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      malformed("assertion #" + std::to_string(index) + ": " + e.what());
    }
    r.name = a.value("name", type + " #" + std::to_string(index));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace qsim
