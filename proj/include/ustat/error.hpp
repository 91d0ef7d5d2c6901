#pragma once

#include <stdexcept>
#include <string>

namespace ustat {

/// Broad classes of failure; the CLI maps these onto exit codes.
enum class ErrorKind {
  Validation,  // malformed input or violated precondition
  Budget,      // enumeration or sampling budget exhausted
  Degeneracy,  // a degenerate target where a non-degenerate one is required
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define USTAT_DEFINE_ERROR(Name, Kind)                                    \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

USTAT_DEFINE_ERROR(ValidationError, Validation)
USTAT_DEFINE_ERROR(TieError, Validation)
USTAT_DEFINE_ERROR(WindowTooSmall, Validation)
USTAT_DEFINE_ERROR(SequenceTooShort, Validation)
USTAT_DEFINE_ERROR(AlphabetMismatch, Validation)
USTAT_DEFINE_ERROR(NonpositiveDrift, Validation)
USTAT_DEFINE_ERROR(ConditioningImpossible, Validation)
USTAT_DEFINE_ERROR(BudgetExceeded, Budget)
USTAT_DEFINE_ERROR(DegenerateTarget, Degeneracy)
USTAT_DEFINE_ERROR(Inconclusive, Degeneracy)

#undef USTAT_DEFINE_ERROR

}  // namespace ustat
