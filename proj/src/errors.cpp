#include "overlap_lab/errors.hpp"

namespace overlap_lab {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::grid_too_small: return "GridTooSmall";
    case Errc::not_symmetric: return "NotSymmetric";
    case Errc::no_convergence: return "NoConvergence";
    case Errc::bad_zeta: return "BadZeta";
    case Errc::too_many_atoms: return "TooManyAtoms";
    case Errc::bad_weights: return "BadWeights";
    case Errc::off_grid_overlap: return "OffGridOverlap";
    case Errc::acceptance_too_low: return "AcceptanceTooLow";
    case Errc::too_large: return "TooLarge";
    case Errc::event_null: return "EventNull";
    case Errc::divide_by_zero: return "DivideByZero";
    case Errc::null_conditioning: return "NullConditioning";
    case Errc::parse_error: return "ParseError";
    case Errc::validation_error: return "ValidationError";
    case Errc::io_error: return "IoError";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what),
      code_(code) {}

}  // namespace overlap_lab
