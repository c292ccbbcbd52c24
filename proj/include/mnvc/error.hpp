#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace mnvc {

enum class ErrorKind {
  Config,     // invalid layer/codec configuration or precondition violation
  Shape,      // tensor shapes or quantization parameters do not line up
  Domain,     // argument outside the mathematical domain
  Truncated,  // a coded stream ran out of bytes
  Corrupt,    // coded bytes are inconsistent with the model
  Parse,      // malformed partition header or record layout
  Format,     // bad magic, version or checksum
  Validation, // well-formed but semantically inconsistent fields
  Desync,     // decoder state does not match the stream (e.g. inter frame w/o reference)
  Io,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::Corrupt: return "corrupt";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Format: return "format";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Desync: return "desync";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

// Single exception type for the whole library. `index` names the offending
// partition / frame / layer when one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what),
        kind_(kind),
        message_(what),
        index_(index) {}

  ErrorKind kind() const noexcept { return kind_; }
  // what() without the kind prefix.
  const std::string& message() const noexcept { return message_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  std::string message_;
  std::optional<std::size_t> index_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what,
                              std::optional<std::size_t> index = std::nullopt) {
  throw Error(kind, what, index);
}

inline void require(bool cond, ErrorKind kind, const char* what) {
  if (!cond) fail(kind, what);
}

}  // namespace mnvc
