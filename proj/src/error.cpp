#include "talesumm/error.hpp"

namespace talesumm {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid input";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kNumerical: return "numerical error";
    case ErrorKind::kInternal: return "internal error";
  }
  return "error";
}

}  // namespace talesumm
