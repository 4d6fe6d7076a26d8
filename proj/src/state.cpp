#include "abtm/state.hpp"

#include <string>

#include "abtm/error.hpp"

namespace abtm {

NodeState decode_state(double v) {
  if (v == 0.0) return NodeState::Running;
  if (v == 1.0) return NodeState::Success;
  if (v == 2.0) return NodeState::Failure;
  throw Error(ErrorCode::InvalidArgument, "invalid node state encoding " + std::to_string(v));
}

std::string_view to_string(NodeState s) noexcept {
  switch (s) {
    case NodeState::Running: return "R";
    case NodeState::Success: return "S";
    case NodeState::Failure: return "F";
  }
  return "?";
}

char state_letter(NodeState s) noexcept { return to_string(s)[0]; }

std::string_view to_string(TickType t) noexcept {
  switch (t) {
    case TickType::None: return "None";
    case TickType::CheckingRise: return "CR";
    case TickType::CheckingFall: return "CF";
    case TickType::ActivatingRise: return "AR";
    case TickType::ActivatingFall: return "AF";
  }
  return "?";
}

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::ReservedKey: return "ReservedKey";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::DivideByZero: return "DivideByZero";
    case ErrorCode::CycleBudgetExceeded: return "CycleBudgetExceeded";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::ValidationFailed: return "ValidationFailed";
    case ErrorCode::MalformedDump: return "MalformedDump";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::OracleMismatch: return "OracleMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace abtm
