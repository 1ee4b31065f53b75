#include "qsim/optical_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "json_source.hpp"

namespace qsim {

std::string_view to_string(QkdState s) {
  switch (s) {
    case QkdState::Idle: return "IDLE";
    case QkdState::Initializing: return "INITIALIZING";
    case QkdState::KeysFlowing: return "KEYS_FLOWING";
    case QkdState::Failed: return "FAILED";
  }
  return "?";
}

std::string_view to_string(Provenance p) {
  return p == Provenance::Paper ? "PAPER" : "SYNTHETIC";
}

namespace {

Provenance provenance_from_string(const std::string& s, const std::string& where) {
  if (s == "PAPER") return Provenance::Paper;
  if (s == "SYNTHETIC") return Provenance::Synthetic;
  fail(ErrorCode::SchemaError, where + ": unknown provenance '" + s + "'");
}

std::string series_name(const CalibrationSeries& s) {
  std::ostringstream os;
  os << to_string(s.path_class) << '/' << s.n_channels << '/' << to_string(s.modulation);
  return os.str();
}

void validate_series(const CalibrationSeries& s, const std::string& source) {
  auto where = [&](int line) { return source + ":" + std::to_string(line); };
  if (s.n_channels < 1) {
    fail(ErrorCode::SchemaError, where(s.line) + ": n_channels must be >= 1");
  }
  if (s.points.empty()) {
    fail(ErrorCode::SchemaError, where(s.line) + ": series " + series_name(s) + " has no points");
  }
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const auto& p = s.points[i];
    if (!(p.skr_bps >= 0.0)) {
      fail(ErrorCode::SchemaError, where(p.line) + ": negative skr_bps in " + series_name(s));
    }
    if (!(p.qber >= 0.0 && p.qber <= 1.0)) {
      fail(ErrorCode::SchemaError, where(p.line) + ": qber outside [0,1] in " + series_name(s));
    }
    if (i == 0) continue;
    const auto& prev = s.points[i - 1];
    if (!(p.power_dbm > prev.power_dbm)) {
      fail(ErrorCode::SchemaError,
           where(p.line) + ": power_dbm not strictly ascending in " + series_name(s));
    }
    if (p.skr_bps > prev.skr_bps) {
      std::ostringstream os;
      os << where(p.line) << ": skr increases from " << prev.skr_bps << " to " << p.skr_bps
         << " bps with power in " << series_name(s);
      fail(ErrorCode::SchemaError, os.str());
    }
    if (p.qber < prev.qber) {
      std::ostringstream os;
      os << where(p.line) << ": qber decreases from " << prev.qber << " to " << p.qber
         << " with power in " << series_name(s);
      fail(ErrorCode::SchemaError, os.str());
    }
  }
}

template <typename T>
T field(const nlohmann::ordered_json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    fail(ErrorCode::SchemaError, where + ": missing field '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::SchemaError, where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

CalibrationTable::CalibrationTable(std::vector<CalibrationSeries> series) : series_(std::move(series)) {
  std::map<std::tuple<int, int, int>, bool> seen;
  for (const auto& s : series_) {
    validate_series(s, "<table>");
    auto key = std::make_tuple(static_cast<int>(s.path_class), s.n_channels, static_cast<int>(s.modulation));
    if (seen[key]) {
      fail(ErrorCode::SchemaError, "duplicate calibration series " + series_name(s));
    }
    seen[key] = true;
  }
}

CalibrationTable CalibrationTable::parse(std::string_view json_text, const std::string& source_name) {
  auto doc = detail::parse_json_or_throw(json_text, source_name);
  detail::ObjectLines lines(json_text);
  std::size_t ordinal = 0;

  const nlohmann::ordered_json* list = &doc;
  if (doc.is_object()) {
    ++ordinal;  // root object
    auto it = doc.find("series");
    if (it == doc.end()) {
      fail(ErrorCode::SchemaError, source_name + ":1: expected a 'series' array");
    }
    list = &*it;
  }
  if (!list->is_array()) {
    fail(ErrorCode::SchemaError, source_name + ":1: calibration table must be an array of series");
  }

  std::vector<CalibrationSeries> out;
  std::map<std::tuple<int, int, int>, int> seen;
  for (const auto& js : *list) {
    CalibrationSeries s;
    s.line = lines.line_of(ordinal++);
    const std::string where = source_name + ":" + std::to_string(s.line);
    if (!js.is_object()) fail(ErrorCode::SchemaError, where + ": series must be an object");
    s.path_class = path_class_from_string(field<std::string>(js, "path_class", where));
    s.n_channels = field<int>(js, "n_channels", where);
    s.modulation = modulation_from_string(field<std::string>(js, "modulation", where));
    auto pts = js.find("points");
    if (pts == js.end() || !pts->is_array()) {
      fail(ErrorCode::SchemaError, where + ": missing 'points' array");
    }
    for (const auto& jp : *pts) {
      CalibrationPoint p;
      p.line = lines.line_of(ordinal++);
      const std::string pw = source_name + ":" + std::to_string(p.line);
      if (!jp.is_object()) fail(ErrorCode::SchemaError, pw + ": point must be an object");
      p.power_dbm = field<double>(jp, "power_dbm", pw);
      p.skr_bps = field<double>(jp, "skr_bps", pw);
      p.qber = field<double>(jp, "qber", pw);
      p.provenance = provenance_from_string(field<std::string>(jp, "provenance", pw), pw);
      if (jp.contains("qber_provenance")) {
        p.qber_provenance = provenance_from_string(field<std::string>(jp, "qber_provenance", pw), pw);
      }
      s.points.push_back(p);
    }
    validate_series(s, source_name);
    auto key = std::make_tuple(static_cast<int>(s.path_class), s.n_channels, static_cast<int>(s.modulation));
    if (auto it = seen.find(key); it != seen.end()) {
      fail(ErrorCode::SchemaError, where + ": duplicate series " + series_name(s) +
                                       " (first defined at line " + std::to_string(it->second) + ")");
    }
    seen[key] = s.line;
    out.push_back(std::move(s));
  }
  CalibrationTable table;
  table.series_ = std::move(out);
  return table;
}

CalibrationTable CalibrationTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::NotFound, "cannot open calibration table " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.filename().string());
}

const CalibrationSeries* CalibrationTable::find(PathClass path_class, int n_channels,
                                                Modulation modulation) const {
  for (const auto& s : series_) {
    if (s.path_class == path_class && s.n_channels == n_channels && s.modulation == modulation) {
      return &s;
    }
  }
  return nullptr;
}

double BerModel::crossing_dbm(Modulation m, PathClass c) const {
  double p = qpsk_crossing_dbm;
  if (m == Modulation::Pm8Qam) p = qam8_crossing_dbm;
  if (m == Modulation::Pm16Qam) p = qam16_crossing_dbm;
  return c == PathClass::BypassDrop ? p - drop_gain_db : p;
}

std::optional<PowerWindow> intersect(const PowerWindow& a, const PowerWindow& b) {
  PowerWindow w{std::max(a.min_dbm, b.min_dbm), std::min(a.max_dbm, b.max_dbm)};
  if (w.min_dbm > w.max_dbm) return std::nullopt;
  return w;
}

double aggregate_coexistence_power(double per_channel_dbm, int n_channels) {
  if (n_channels < 1) {
    fail(ErrorCode::InvalidArgument, "aggregate_coexistence_power: n_channels must be >= 1");
  }
  return per_channel_dbm + 10.0 * std::log10(static_cast<double>(n_channels));
}

double awg_quantum_loss(double temperature, const AwgModel& model) {
  const double d = temperature - model.optimal_temperature;
  return model.insertion_loss_at_optimum_db + model.detuning_coefficient_db * d * d;
}

SkrQber estimate_skr_qber(PathClass path_class, int n_channels, Modulation modulation,
                          double per_channel_power_dbm, const CalibrationTable& table) {
  if (n_channels < 0) {
    fail(ErrorCode::InvalidArgument, "estimate_skr_qber: negative channel count");
  }
  if (n_channels == 0) {
    const auto* s = table.find(path_class, 1, Modulation::PmQpsk);
    if (s == nullptr) {
      fail(ErrorCode::UnsupportedConfiguration,
           "no single-channel PM-QPSK series for " + std::string(to_string(path_class)));
    }
    return {s->points.front().skr_bps, s->points.front().qber};
  }
  const auto* s = table.find(path_class, n_channels, modulation);
  if (s == nullptr) {
    std::ostringstream os;
    os << "no calibration series for " << to_string(path_class) << '/' << n_channels << '/'
       << to_string(modulation);
    fail(ErrorCode::UnsupportedConfiguration, os.str());
  }
  const auto& pts = s->points;
  const double p = per_channel_power_dbm;
  if (p < pts.front().power_dbm) return {0.0, pts.front().qber};
  if (p > pts.back().power_dbm) return {0.0, pts.back().qber};
  auto hi = std::lower_bound(pts.begin(), pts.end(), p,
                             [](const CalibrationPoint& cp, double v) { return cp.power_dbm < v; });
  if (hi->power_dbm == p) return {hi->skr_bps, hi->qber};
  auto lo = std::prev(hi);
  const double t = (p - lo->power_dbm) / (hi->power_dbm - lo->power_dbm);
  return {lo->skr_bps + t * (hi->skr_bps - lo->skr_bps), lo->qber + t * (hi->qber - lo->qber)};
}

SkrQber estimate_skr_qber(const QuantumLink& link, const CalibrationTable& table) {
  return estimate_skr_qber(link.path_class, link.n_coexisting, link.coexisting_modulation,
                           link.per_channel_power_dbm, table);
}

double estimate_prefec_ber(const OpticalChannel& channel, PathClass path_class,
                           double per_channel_power_dbm, const BerModel& model) {
  const double crossing = model.crossing_dbm(channel.modulation, path_class);
  const double ber =
      model.fec_threshold * std::pow(10.0, -model.slope_decades_per_db * (per_channel_power_dbm - crossing));
  return std::min(ber, model.max_ber);
}

std::optional<PowerWindow> coexistence_window(Modulation modulation, int n_channels,
                                              PathClass path_class,
                                              const CalibrationTable& table,
                                              const BerModel& ber) {
  const auto* s = table.find(path_class, n_channels, modulation);
  if (s == nullptr) return std::nullopt;
  const auto& pts = s->points;
  if (pts.front().skr_bps <= 0.0) return std::nullopt;
  double top = pts.front().power_dbm;
  for (const auto& p : pts) {
    if (p.skr_bps > 0.0) top = p.power_dbm;
  }
  // BER < threshold holds strictly above the crossing power.
  const double bottom = std::max(pts.front().power_dbm, ber.crossing_dbm(modulation, path_class));
  if (bottom > top) return std::nullopt;
  return PowerWindow{bottom, top};
}

}  // namespace qsim
