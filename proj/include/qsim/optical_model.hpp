#pragma once

// Physical-layer model: coexistence power arithmetic, AWG filtering loss,
// calibrated SKR/QBER lookup, pre-FEC BER estimate and the per-channel
// power window in which a quantum channel and data channels can share a fibre.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qsim/common.hpp"

namespace qsim {

struct OpticalChannel {
  Frequency frequency;
  Modulation modulation = Modulation::PmQpsk;
  double fec_overhead_pct = 25.0;
  double launch_power_dbm = -15.0;
};

enum class QkdState { Idle, Initializing, KeysFlowing, Failed };

std::string_view to_string(QkdState s);

/// Alice->Bob pairing. The coexistence fields describe the data channels on
/// the fibre span that governs SKR (Bob-side for bypass paths, Alice-side for
/// drop paths where the drop port separates quantum and data).
struct QuantumLink {
  IslandId alice;
  IslandId bob;
  PathClass path_class = PathClass::BypassBypass;
  double path_loss_db = 0.0;
  int n_coexisting = 0;
  Modulation coexisting_modulation = Modulation::PmQpsk;
  double per_channel_power_dbm = 0.0;
  double coexistence_power_dbm = 0.0;
  double skr_bps = 0.0;
  double qber = 0.0;
  QkdState state = QkdState::Idle;
};

enum class Provenance { Paper, Synthetic };

std::string_view to_string(Provenance p);

struct CalibrationPoint {
  double power_dbm = 0.0;
  double skr_bps = 0.0;
  double qber = 0.0;
  Provenance provenance = Provenance::Synthetic;       // of skr_bps
  Provenance qber_provenance = Provenance::Synthetic;  // of qber
  int line = 0;                                        // source line, 0 if built in code
};

struct CalibrationSeries {
  PathClass path_class = PathClass::BypassBypass;
  int n_channels = 1;
  Modulation modulation = Modulation::PmQpsk;
  std::vector<CalibrationPoint> points;  // strictly ascending power
  int line = 0;
};

/// Immutable set of measured/synthetic SKR and QBER series, one per
/// (path class, channel count, modulation). Loading validates ordering and
/// the monotonicity invariants and reports the offending source line.
class CalibrationTable {
 public:
  CalibrationTable() = default;
  explicit CalibrationTable(std::vector<CalibrationSeries> series);

  static CalibrationTable parse(std::string_view json_text, const std::string& source_name = "<memory>");
  static CalibrationTable load(const std::filesystem::path& path);

  const CalibrationSeries* find(PathClass path_class, int n_channels, Modulation modulation) const;
  std::span<const CalibrationSeries> series() const { return series_; }

 private:
  std::vector<CalibrationSeries> series_;
};

struct AwgModel {
  double center_frequency_thz = 193.3;
  double optimal_temperature = 25.0;
  double insertion_loss_at_optimum_db = 2.9;
  double detuning_coefficient_db = 1.5;  // dB per temperature-unit squared
};

/// Log-linear pre-FEC BER: ber = threshold * 10^(-slope * (p - p_cross)),
/// where p_cross is the power at which a modulation meets the FEC threshold
/// on a bypass-bypass path; drop paths cross drop_gain_db lower.
struct BerModel {
  double fec_threshold = 4.0e-2;  // 25 % overhead soft-decision limit
  double slope_decades_per_db = 0.25;
  double qpsk_crossing_dbm = -28.5;
  double qam8_crossing_dbm = -25.0;
  double qam16_crossing_dbm = -21.5;
  double drop_gain_db = 3.0;
  double max_ber = 0.5;

  double crossing_dbm(Modulation m, PathClass c) const;
};

struct SkrQber {
  double skr_bps = 0.0;
  double qber = 0.0;
};

struct PowerWindow {
  double min_dbm = 0.0;
  double max_dbm = 0.0;

  double width() const { return max_dbm - min_dbm; }
  double center() const { return 0.5 * (min_dbm + max_dbm); }
  bool contains(double p) const { return p >= min_dbm && p <= max_dbm; }
};

std::optional<PowerWindow> intersect(const PowerWindow& a, const PowerWindow& b);

double aggregate_coexistence_power(double per_channel_dbm, int n_channels);

double awg_quantum_loss(double temperature, const AwgModel& model);

/// Series lookup plus piecewise-linear interpolation in dBm; SKR is clamped
/// to zero outside the series' power range. n_channels == 0 means no data
/// channel shares the span: the path class's single-channel peak is returned.
SkrQber estimate_skr_qber(PathClass path_class, int n_channels, Modulation modulation,
                          double per_channel_power_dbm, const CalibrationTable& table);

SkrQber estimate_skr_qber(const QuantumLink& link, const CalibrationTable& table);

double estimate_prefec_ber(const OpticalChannel& channel, PathClass path_class,
                           double per_channel_power_dbm, const BerModel& model);

/// Per-channel power interval where SKR > 0 and pre-FEC BER < threshold.
std::optional<PowerWindow> coexistence_window(Modulation modulation, int n_channels,
                                              PathClass path_class,
                                              const CalibrationTable& table,
                                              const BerModel& ber);

}  // namespace qsim
