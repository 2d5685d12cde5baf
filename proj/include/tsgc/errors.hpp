#pragma once

#include <stdexcept>
#include <string>

namespace tsgc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TSGC_DEFINE_ERROR(Name) \
  class Name : public Error {   \
   public:                      \
    using Error::Error;         \
  }

TSGC_DEFINE_ERROR(DimensionError);
TSGC_DEFINE_ERROR(UsageError);
TSGC_DEFINE_ERROR(IndexError);
TSGC_DEFINE_ERROR(StatisticsError);
TSGC_DEFINE_ERROR(EmptyReductionError);
TSGC_DEFINE_ERROR(FormatError);
TSGC_DEFINE_ERROR(ParseError);
TSGC_DEFINE_ERROR(ConfigError);
TSGC_DEFINE_ERROR(DataError);
TSGC_DEFINE_ERROR(RangeError);
TSGC_DEFINE_ERROR(TrainingError);
TSGC_DEFINE_ERROR(GenerationError);
TSGC_DEFINE_ERROR(IoError);

#undef TSGC_DEFINE_ERROR

}  // namespace tsgc
