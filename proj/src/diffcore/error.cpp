#include "mind/diffcore/error.hpp"

namespace mind {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::unbound_leaf: return "unbound_leaf";
    case ErrorCode::non_scalar_output: return "non_scalar_output";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::parse: return "parse";
    case ErrorCode::io: return "io";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::precondition: return "precondition";
  }
  return "unknown";
}

}  // namespace mind
