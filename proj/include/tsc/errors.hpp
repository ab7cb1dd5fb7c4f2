#pragma once

#include <stdexcept>
#include <string>

namespace tsc {

struct ZeroTotalError : std::invalid_argument {
  ZeroTotalError() : std::invalid_argument("phase counts sum to zero") {}
};

struct InvalidAlphaError : std::invalid_argument {
  explicit InvalidAlphaError(double alpha)
      : std::invalid_argument("alpha must lie in (0,1), got " + std::to_string(alpha)) {}
};

struct InfeasibleError : std::invalid_argument {
  explicit InfeasibleError(const std::string& what) : std::invalid_argument(what) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidActionError : std::logic_error {
  explicit InvalidActionError(const std::string& what) : std::logic_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tsc
