#ifndef N2M_ERROR_HPP_
#define N2M_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace n2m {

enum class ErrorCategory {
  InvalidConfig,
  WrongPointCount,
  DimensionMismatch,
  NonPositiveDepth,
  DepthOutOfRange,
  PlacementFailure,
  EmptyInput,
  EmptyCloud,
  NoValidViewpoint,
  IoFailure,
  FormatVersionMismatch,
  EmptyDataset,
  SelectionExhausted,
  RegionEmpty,
  BudgetExhausted,
  UsageError,
};

inline std::string_view category_name(ErrorCategory c) {
  switch (c) {
  case ErrorCategory::InvalidConfig: return "InvalidConfig";
  case ErrorCategory::WrongPointCount: return "WrongPointCount";
  case ErrorCategory::DimensionMismatch: return "DimensionMismatch";
  case ErrorCategory::NonPositiveDepth: return "NonPositiveDepth";
  case ErrorCategory::DepthOutOfRange: return "DepthOutOfRange";
  case ErrorCategory::PlacementFailure: return "PlacementFailure";
  case ErrorCategory::EmptyInput: return "EmptyInput";
  case ErrorCategory::EmptyCloud: return "EmptyCloud";
  case ErrorCategory::NoValidViewpoint: return "NoValidViewpoint";
  case ErrorCategory::IoFailure: return "IoFailure";
  case ErrorCategory::FormatVersionMismatch: return "FormatVersionMismatch";
  case ErrorCategory::EmptyDataset: return "EmptyDataset";
  case ErrorCategory::SelectionExhausted: return "SelectionExhausted";
  case ErrorCategory::RegionEmpty: return "RegionEmpty";
  case ErrorCategory::BudgetExhausted: return "BudgetExhausted";
  case ErrorCategory::UsageError: return "UsageError";
  }
  return "Unknown";
}

/// Every failure surfaced by the library carries one category so callers
/// (and the CLI) can branch on it without parsing messages.
class Error : public std::runtime_error {
public:
  Error(ErrorCategory category, const std::string &what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string &what) {
  throw Error(category, std::string(category_name(category)) + ": " + what);
}

} // namespace n2m

#endif // N2M_ERROR_HPP_
