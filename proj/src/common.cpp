#include "qsim/common.hpp"

namespace qsim {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::UnsupportedConfiguration: return "unsupported_configuration";
    case ErrorCode::QuantumCollision: return "quantum_collision";
    case ErrorCode::WavelengthCollision: return "wavelength_collision";
    case ErrorCode::UnknownPort: return "unknown_port";
    case ErrorCode::DisconnectedPath: return "disconnected_path";
    case ErrorCode::DegreeInUse: return "degree_in_use";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::InvalidState: return "invalid_state";
    case ErrorCode::Infeasible: return "infeasible";
    case ErrorCode::SchemaError: return "schema_error";
    case ErrorCode::Timeout: return "timeout";
  }
  return "unknown";
}

std::string_view to_string(Modulation m) {
  switch (m) {
    case Modulation::PmQpsk: return "PM-QPSK";
    case Modulation::Pm8Qam: return "PM-8QAM";
    case Modulation::Pm16Qam: return "PM-16QAM";
  }
  return "?";
}

Modulation modulation_from_string(std::string_view s) {
  if (s == "PM-QPSK") return Modulation::PmQpsk;
  if (s == "PM-8QAM") return Modulation::Pm8Qam;
  if (s == "PM-16QAM") return Modulation::Pm16Qam;
  fail(ErrorCode::SchemaError, "unknown modulation '" + std::string(s) + "'");
}

std::string_view to_string(PathClass c) {
  return c == PathClass::BypassBypass ? "BYPASS_BYPASS" : "BYPASS_DROP";
}

PathClass path_class_from_string(std::string_view s) {
  if (s == "BYPASS_BYPASS") return PathClass::BypassBypass;
  if (s == "BYPASS_DROP") return PathClass::BypassDrop;
  fail(ErrorCode::SchemaError, "unknown path class '" + std::string(s) + "'");
}

}  // namespace qsim
