#include "em3/error.h"

namespace em3 {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kConfig: return "configuration error";
    case ErrorCode::kInput: return "input error";
    case ErrorCode::kShape: return "shape error";
    case ErrorCode::kUsage: return "usage error";
    case ErrorCode::kState: return "state error";
    case ErrorCode::kNotFound: return "not found";
    case ErrorCode::kCompatibility: return "compatibility error";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kIo: return "I/O error";
    case ErrorCode::kNumeric: return "numeric error";
    case ErrorCode::kTraining: return "training error";
    case ErrorCode::kTransport: return "transport error";
    case ErrorCode::kProtocol: return "protocol error";
  }
  return "error";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace em3
