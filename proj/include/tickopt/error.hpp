#pragma once

#include <stdexcept>
#include <string>

namespace tickopt {

/// Invalid or inconsistent configuration (bad parameter, CFL violation, empty grid).
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Input outside the mathematical domain of an operation (off-grid price, multi-tick jump).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// A numerical cross-check failed (e.g. MC and PDE estimates disagree beyond 3 SE).
class NumericalAssertion : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

} // namespace tickopt
