#ifndef KFORGE_ERRORS_HPP
#define KFORGE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace kforge {

// Bad user input: malformed files, dimension mismatches, invalid configs.
// The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure during fitting or evaluation (non-finite loss,
// divergence). The CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kforge

#endif
