#pragma once

#include <stdexcept>
#include <string>

namespace hingenet {

enum class ErrorCode {
  invalid_argument,  // caller broke a precondition
  io,                // file system failure
  format,            // malformed file contents
  numeric,           // NaN/Inf detected during computation
  contract,          // internal invariant violated by the caller
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void throw_invalid(const std::string& msg) {
  throw Error(ErrorCode::invalid_argument, msg);
}
[[noreturn]] inline void throw_io(const std::string& msg) {
  throw Error(ErrorCode::io, msg);
}
[[noreturn]] inline void throw_format(const std::string& msg) {
  throw Error(ErrorCode::format, msg);
}
[[noreturn]] inline void throw_format_at(long long byte_offset, const std::string& msg) {
  throw Error(ErrorCode::format, "at byte " + std::to_string(byte_offset) + ": " + msg);
}
[[noreturn]] inline void throw_numeric(const std::string& msg) {
  throw Error(ErrorCode::numeric, msg);
}
[[noreturn]] inline void throw_contract(const std::string& msg) {
  throw Error(ErrorCode::contract, msg);
}

}  // namespace hingenet
