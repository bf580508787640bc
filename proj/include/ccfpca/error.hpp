#pragma once

#include <stdexcept>
#include <string>

namespace ccfpca {

//! Bad input: malformed files, out-of-range parameters, inconsistent
//! options. The CLI maps these to exit code 1.
class ValidationError : public std::invalid_argument
{
public:
  explicit ValidationError(const std::string& what)
    : std::invalid_argument(what)
  {}
};

//! The data are fine but the numerics cannot proceed (all kernel weights
//! vanish, spectrum is degenerate, eigen-gap too small). Exit code 2.
class NumericalError : public std::runtime_error
{
public:
  explicit NumericalError(const std::string& what)
    : std::runtime_error(what)
  {}
};

} // namespace ccfpca
