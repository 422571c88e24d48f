#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace talesumm {

/// Broad failure classes. The CLI maps kInvalidInput/kParse/kIo/kConfig to
/// exit code 1 and everything else to 2.
enum class ErrorKind {
  kInvalidInput,
  kParse,
  kIo,
  kConfig,
  kNumerical,
  kInternal,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed binary or JSON input. Carries the byte offset where decoding
/// stopped when one is known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::optional<std::uint64_t> offset = {})
      : Error(ErrorKind::kParse, with_offset(what, offset)), offset_(offset) {}

  std::optional<std::uint64_t> offset() const { return offset_; }

 private:
  static std::string with_offset(const std::string& what,
                                 std::optional<std::uint64_t> offset) {
    if (!offset) return what;
    return what + " (at byte offset " + std::to_string(*offset) + ")";
  }

  std::optional<std::uint64_t> offset_;
};

inline Error invalid_input(const std::string& what) {
  return Error(ErrorKind::kInvalidInput, what);
}

inline Error config_error(const std::string& what) {
  return Error(ErrorKind::kConfig, what);
}

inline Error io_error(const std::string& what) {
  return Error(ErrorKind::kIo, what);
}

inline Error numerical_error(const std::string& what) {
  return Error(ErrorKind::kNumerical, what);
}

}  // namespace talesumm
