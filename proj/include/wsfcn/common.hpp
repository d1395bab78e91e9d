#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wsfcn {

// Thrown for precondition / configuration violations. The CLI maps this to
// exit code 1; anything else escaping to main is a runtime failure (exit 2).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

// Label value excluded from losses and metrics.
inline constexpr int kIgnoreLabel = 255;

}  // namespace wsfcn
