#pragma once

#include <stdexcept>
#include <string>

namespace rankprop {

// Every failure carries a short machine-parseable class name. The CLI prints
// it verbatim and the scenario service maps it to an HTTP status.
class Error : public std::runtime_error {
 public:
  Error(std::string error_class, const std::string& what)
      : std::runtime_error(what), class_(std::move(error_class)) {}

  const std::string& error_class() const noexcept { return class_; }

 private:
  std::string class_;
};

#define RANKPROP_DEFINE_ERROR(Name, tag)                              \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(tag, what) {}      \
  }

RANKPROP_DEFINE_ERROR(SchemaError, "schema_error");
RANKPROP_DEFINE_ERROR(InvariantError, "invariant_error");
RANKPROP_DEFINE_ERROR(PreconditionError, "precondition_error");
RANKPROP_DEFINE_ERROR(InsufficientDataError, "insufficient_data");
RANKPROP_DEFINE_ERROR(UndefinedRatioError, "undefined_ratio");
RANKPROP_DEFINE_ERROR(BrokenChainError, "broken_chain");
RANKPROP_DEFINE_ERROR(CoverageError, "uncovered_position");
RANKPROP_DEFINE_ERROR(IoError, "io_error");
RANKPROP_DEFINE_ERROR(RejectRateError, "reject_rate_exceeded");
RANKPROP_DEFINE_ERROR(NotFoundError, "not_found");
RANKPROP_DEFINE_ERROR(ConfigError, "config_error");

#undef RANKPROP_DEFINE_ERROR

}  // namespace rankprop
