#pragma once

#include <stdexcept>
#include <string>

namespace vllr {

enum class ErrorKind {
  kInvalidInput,
  kPlanning,
  kTransport,
  kProtocol,
  kContractViolation,
  kGeneration,
  kTaskAssignment,
  kInfeasible,
  kIo,
  kConfig,
  kNumerical,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid_input";
    case ErrorKind::kPlanning: return "planning";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kProtocol: return "protocol";
    case ErrorKind::kContractViolation: return "contract_violation";
    case ErrorKind::kGeneration: return "generation";
    case ErrorKind::kTaskAssignment: return "task_assignment";
    case ErrorKind::kInfeasible: return "infeasible";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kNumerical: return "numerical";
  }
  return "unknown";
}

// Every error raised by the library carries a kind so the CLI can emit
// structured diagnostics.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by the external service clients when a response cannot be used.
// Keeps the raw body around for logging.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, std::string raw_response)
      : Error(ErrorKind::kProtocol, what), raw_(std::move(raw_response)) {}
  const std::string& raw_response() const noexcept { return raw_; }

 private:
  std::string raw_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace vllr
