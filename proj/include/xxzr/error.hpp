#pragma once

#include <stdexcept>
#include <string>

namespace xxzr {

enum class ErrorKind {
  invalid_state,
  domain,
  divisibility,
  symmetry,
  construction,
  extraction,
  degenerate,
  integration,
  tracking,
  singular_curve,
  basis,
  period,
  path,
  contour,
  theta,
  k_solve,
  special_divisor,
  evaluation,
  reconstruction,
  config,
};

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_state: return "invalid-state";
    case ErrorKind::domain: return "domain";
    case ErrorKind::divisibility: return "divisibility";
    case ErrorKind::symmetry: return "symmetry";
    case ErrorKind::construction: return "construction";
    case ErrorKind::extraction: return "extraction";
    case ErrorKind::degenerate: return "degenerate-configuration";
    case ErrorKind::integration: return "integration";
    case ErrorKind::tracking: return "tracking";
    case ErrorKind::singular_curve: return "singular-curve";
    case ErrorKind::basis: return "basis";
    case ErrorKind::period: return "period";
    case ErrorKind::path: return "path";
    case ErrorKind::contour: return "contour-deformation";
    case ErrorKind::theta: return "theta";
    case ErrorKind::k_solve: return "k-solve";
    case ErrorKind::special_divisor: return "special-divisor";
    case ErrorKind::evaluation: return "evaluation";
    case ErrorKind::reconstruction: return "reconstruction";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(kind_name(kind)) + " error: " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace xxzr
