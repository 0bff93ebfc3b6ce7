#include "advlab/error.hpp"

namespace advlab {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidDimension: return "invalid dimension";
    case ErrorKind::InvalidToken: return "invalid token";
    case ErrorKind::InvalidParameter: return "invalid parameter";
    case ErrorKind::InvalidGroup: return "invalid group";
    case ErrorKind::InvalidRatio: return "invalid ratio";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

}  // namespace advlab
