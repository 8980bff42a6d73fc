#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace gti {

// Error taxonomy for the whole library. Each class carries a stable
// machine-readable tag; the CLI maps tags to exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string cls, const std::string& msg)
      : std::runtime_error(msg), class_(std::move(cls)) {}
  const std::string& error_class() const noexcept { return class_; }

 private:
  std::string class_;
};

#define GTI_DEFINE_ERROR(NAME, TAG)                        \
  class NAME : public Error {                              \
   public:                                                 \
    explicit NAME(const std::string& m) : Error(TAG, m) {} \
  }

GTI_DEFINE_ERROR(DimensionError, "DIMENSION_MISMATCH");
GTI_DEFINE_ERROR(ArgumentError, "BAD_ARGUMENT");
GTI_DEFINE_ERROR(LookupError, "LOOKUP_FAILED");
GTI_DEFINE_ERROR(ParseError, "PARSE_ERROR");
GTI_DEFINE_ERROR(FormatError, "FORMAT_ERROR");
GTI_DEFINE_ERROR(FeatureError, "FEATURE_MISSING");
GTI_DEFINE_ERROR(DataNotFoundError, "DATA_NOT_FOUND");
GTI_DEFINE_ERROR(ConfigMismatchError, "CONFIG_MISMATCH");
GTI_DEFINE_ERROR(NumericalError, "NUMERICAL_FAILURE");
GTI_DEFINE_ERROR(CheckpointVersionError, "CHECKPOINT_VERSION");
GTI_DEFINE_ERROR(CheckpointTruncatedError, "CHECKPOINT_TRUNCATED");
GTI_DEFINE_ERROR(CheckpointShapeError, "CHECKPOINT_SHAPE");

#undef GTI_DEFINE_ERROR

}  // namespace gti
