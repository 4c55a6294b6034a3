#pragma once

#include <stdexcept>
#include <string>

namespace overlap_lab {

enum class Errc {
  invalid_argument,
  grid_too_small,
  not_symmetric,
  no_convergence,
  bad_zeta,
  too_many_atoms,
  bad_weights,
  off_grid_overlap,
  acceptance_too_low,
  too_large,
  event_null,
  divide_by_zero,
  null_conditioning,
  parse_error,
  validation_error,
  io_error,
};

const char* errc_name(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI report writer) can tell them apart without parsing
/// the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace overlap_lab
