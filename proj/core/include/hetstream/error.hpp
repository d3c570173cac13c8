#pragma once

#include <stdexcept>
#include <string>

namespace hetstream {

// Base of every error raised by the library. The concrete type names the
// failure class; the message carries the context.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define HETSTREAM_DEFINE_ERROR(Name)      \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

HETSTREAM_DEFINE_ERROR(SingularMatrix);
HETSTREAM_DEFINE_ERROR(NotPositiveDefinite);
HETSTREAM_DEFINE_ERROR(DimensionMismatch);
HETSTREAM_DEFINE_ERROR(EmptyBatch);
HETSTREAM_DEFINE_ERROR(SchemaMismatch);
HETSTREAM_DEFINE_ERROR(InvalidSchema);
HETSTREAM_DEFINE_ERROR(PhaseMismatch);
HETSTREAM_DEFINE_ERROR(InsufficientData);
HETSTREAM_DEFINE_ERROR(InvalidDegrees);
HETSTREAM_DEFINE_ERROR(NonConvergence);
HETSTREAM_DEFINE_ERROR(SingularBatch);
HETSTREAM_DEFINE_ERROR(InvalidConfig);
HETSTREAM_DEFINE_ERROR(FormatError);
// A Monte Carlo replicate failed; the message names the replicate.
HETSTREAM_DEFINE_ERROR(ReplicateFailure);

#undef HETSTREAM_DEFINE_ERROR

}  // namespace hetstream
