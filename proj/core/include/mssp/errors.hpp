#pragma once

#include <stdexcept>
#include <string>

namespace mssp {

/// Base of every error the library throws. `kind()` is a short stable tag
/// used by the CLI to print machine-parseable failure lines.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept = 0;
};

#define MSSP_DECLARE_ERROR(Name, Base, Tag)                     \
  class Name : public Base {                                    \
   public:                                                      \
    using Base::Base;                                           \
    const char* kind() const noexcept override { return Tag; }  \
  };

// Tensor extents or rosters that do not line up.
MSSP_DECLARE_ERROR(ShapeError, Error, "shape")
// A value outside the admissible set (negative pixel, non-binary label, ...).
MSSP_DECLARE_ERROR(DomainError, Error, "domain")
// Invalid configuration, missing inputs, unplaceable synthetic regions.
MSSP_DECLARE_ERROR(ConfigError, Error, "config")
// Non-finite losses or parameters during training.
MSSP_DECLARE_ERROR(NumericalError, Error, "numerical")
MSSP_DECLARE_ERROR(EvaluationError, Error, "evaluation")

MSSP_DECLARE_ERROR(IoError, Error, "io")
MSSP_DECLARE_ERROR(HeaderError, IoError, "io.header")
MSSP_DECLARE_ERROR(DimensionOverflowError, IoError, "io.dimension")
MSSP_DECLARE_ERROR(TruncationError, IoError, "io.truncated")

MSSP_DECLARE_ERROR(CheckpointError, Error, "checkpoint")
MSSP_DECLARE_ERROR(CheckpointMagicError, CheckpointError, "checkpoint.magic")
MSSP_DECLARE_ERROR(CheckpointVersionError, CheckpointError, "checkpoint.version")
MSSP_DECLARE_ERROR(CheckpointRosterError, CheckpointError, "checkpoint.roster")
MSSP_DECLARE_ERROR(CheckpointTruncationError, CheckpointError, "checkpoint.truncated")

#undef MSSP_DECLARE_ERROR

}  // namespace mssp
