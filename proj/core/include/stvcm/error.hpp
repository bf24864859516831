#pragma once

#include <stdexcept>
#include <string>

namespace stvcm {

// Error classes map one-to-one onto CLI exit codes; keep them disjoint.
enum class ErrorKind {
  config,           // bad options, bad levels, bad counts
  io,               // unreadable/unwritable files, malformed CSV/JSON
  schema_version,   // artifact format_version mismatch
  rank_deficient,   // singular fixed block / singular unpenalized system
  non_convergence,  // optimizer hit the iteration cap
  identifiability,  // knot-separation (provider family) violations
  validation,       // data preconditions: insufficient sites, zero rates, ...
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::schema_version: return "schema-version";
    case ErrorKind::rank_deficient: return "rank-deficient";
    case ErrorKind::non_convergence: return "non-convergence";
    case ErrorKind::identifiability: return "identifiability";
    case ErrorKind::validation: return "validation";
  }
  return "unknown";
}

}  // namespace stvcm
