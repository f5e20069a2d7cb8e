#pragma once

#include <stdexcept>
#include <string>

namespace em3 {

enum class ErrorCode {
  kConfig,
  kInput,
  kShape,
  kUsage,
  kState,
  kNotFound,
  kCompatibility,
  kFormat,
  kIo,
  kNumeric,
  kTraining,
  kTransport,
  kProtocol,
};

const char* to_string(ErrorCode code) noexcept;

// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace em3
