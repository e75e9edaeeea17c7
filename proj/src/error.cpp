#include "unipaint/error.hpp"

namespace unipaint {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid_input";
    case ErrorKind::ShapeMismatch: return "shape_mismatch";
    case ErrorKind::OutOfRange: return "out_of_range";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Version: return "version";
    case ErrorKind::Corrupt: return "corrupt";
    case ErrorKind::NonFinite: return "non_finite";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace unipaint
