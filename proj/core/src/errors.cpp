#include "cmj/errors.hpp"

namespace cmj {

std::string_view to_string(Assumption a) {
  switch (a) {
    case Assumption::A1: return "(A1)";
    case Assumption::A2: return "(A2)";
    case Assumption::A3: return "(A3)";
    case Assumption::A4: return "(A4)";
  }
  return "(?)";
}

AssumptionViolated::AssumptionViolated(Assumption which, const std::string& detail)
    : Error(std::string(to_string(which)) + " violated: " + detail), which_(which) {}

PreconditionError::PreconditionError(std::string_view kind, const std::string& detail)
    : Error(std::string(kind) + ": " + detail), kind_(kind) {}

}  // namespace cmj
