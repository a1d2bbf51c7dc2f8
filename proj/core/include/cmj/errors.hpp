#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmj {

// Root of every error raised by the library. Command drivers map the
// subclasses onto exit codes, so callers rarely need to catch anything finer.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Assumption { A1, A2, A3, A4 };

std::string_view to_string(Assumption a);

// A reproduction law fails one of the standing model assumptions.
class AssumptionViolated : public Error {
 public:
  AssumptionViolated(Assumption which, const std::string& detail);
  Assumption which() const noexcept { return which_; }

 private:
  Assumption which_;
};

// (A1): E[N] <= 1.
class SubcriticalLaw : public AssumptionViolated {
 public:
  explicit SubcriticalLaw(const std::string& detail)
      : AssumptionViolated(Assumption::A1, detail) {}
};

// (A2): m(theta) is infinite on every probed theta.
class NoFiniteBranch : public AssumptionViolated {
 public:
  explicit NoFiniteBranch(const std::string& detail)
      : AssumptionViolated(Assumption::A2, detail) {}
};

class A3Violated : public AssumptionViolated {
 public:
  explicit A3Violated(const std::string& detail)
      : AssumptionViolated(Assumption::A3, detail) {}
};

class A4Violated : public AssumptionViolated {
 public:
  explicit A4Violated(const std::string& detail)
      : AssumptionViolated(Assumption::A4, detail) {}
};

// An operation was called on inputs outside its contract, e.g. a time window
// past the horizon.
class PreconditionError : public Error {
 public:
  PreconditionError(std::string_view kind, const std::string& detail);
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define CMJ_DECLARE_PRECONDITION(Name)                                   \
  class Name : public PreconditionError {                                \
   public:                                                               \
    explicit Name(const std::string& detail)                             \
        : PreconditionError(#Name, detail) {}                            \
  }

CMJ_DECLARE_PRECONDITION(TooFewReplicas);
CMJ_DECLARE_PRECONDITION(TooFewRetained);
CMJ_DECLARE_PRECONDITION(TooFewSamples);
CMJ_DECLARE_PRECONDITION(CurveTooShort);
CMJ_DECLARE_PRECONDITION(GridBeyondHorizon);
CMJ_DECLARE_PRECONDITION(WindowBeyondHorizon);
CMJ_DECLARE_PRECONDITION(LatticeLaw);

#undef CMJ_DECLARE_PRECONDITION

// Malformed or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cmj
