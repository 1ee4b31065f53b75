#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qsim {

enum class ErrorCode {
  InvalidArgument,
  UnsupportedConfiguration,
  QuantumCollision,
  WavelengthCollision,
  UnknownPort,
  DisconnectedPath,
  DegreeInUse,
  NotFound,
  InvalidState,
  Infeasible,
  SchemaError,
  Timeout,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every recoverable error raised by the library.
/// The code maps one-to-one onto the gateway error body `code` field.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

template <typename Tag, typename Rep = int>
struct StrongId {
  Rep value{};

  constexpr StrongId() = default;
  constexpr explicit StrongId(Rep v) : value(v) {}

  friend constexpr auto operator<=>(const StrongId&, const StrongId&) = default;
};

using IslandId = StrongId<struct IslandIdTag>;
using DegreeId = StrongId<struct DegreeIdTag>;

/// Optical frequency on an integer MHz grid so grid arithmetic stays exact.
struct Frequency {
  std::int64_t mhz{};

  static constexpr Frequency from_thz(double thz) {
    return Frequency{static_cast<std::int64_t>(thz * 1e6 + (thz >= 0 ? 0.5 : -0.5))};
  }
  constexpr double thz() const { return static_cast<double>(mhz) / 1e6; }

  friend constexpr auto operator<=>(const Frequency&, const Frequency&) = default;
};

enum class Modulation { PmQpsk, Pm8Qam, Pm16Qam };

/// Densest first; the planner walks this order.
inline constexpr Modulation kModulationsDensestFirst[] = {
    Modulation::Pm16Qam, Modulation::Pm8Qam, Modulation::PmQpsk};

std::string_view to_string(Modulation m);
Modulation modulation_from_string(std::string_view s);

enum class PathClass { BypassBypass, BypassDrop };

std::string_view to_string(PathClass c);
PathClass path_class_from_string(std::string_view s);

enum class SignalKind { Quantum, Data };

}  // namespace qsim

template <typename Tag, typename Rep>
struct std::hash<qsim::StrongId<Tag, Rep>> {
  std::size_t operator()(const qsim::StrongId<Tag, Rep>& id) const noexcept {
    return std::hash<Rep>{}(id.value);
  }
};
