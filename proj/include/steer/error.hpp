#pragma once

#include <stdexcept>
#include <string>

namespace steer {

enum class Errc {
  invalid_argument = 1,
  shape_mismatch,
  io,
  missing_input,
  untrainable,
  divergence,
  conflict,
  not_found,
  bad_state,
};

/// Exception carrying a coarse error category. The C API maps these onto
/// its status codes; everything else surfaces as a plain runtime error.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace steer
