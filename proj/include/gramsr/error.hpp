#pragma once

#include <stdexcept>
#include <string>

namespace gramsr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define GRAMSR_DECLARE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    explicit Name(const std::string& what) : Error(what) {} \
  };

GRAMSR_DECLARE_ERROR(ShapeError)
GRAMSR_DECLARE_ERROR(SizeError)
GRAMSR_DECLARE_ERROR(IoError)
GRAMSR_DECLARE_ERROR(FormatError)
GRAMSR_DECLARE_ERROR(ConfigError)
GRAMSR_DECLARE_ERROR(DataError)
GRAMSR_DECLARE_ERROR(CorruptionError)
GRAMSR_DECLARE_ERROR(DegenerateInputError)

#undef GRAMSR_DECLARE_ERROR

}  // namespace gramsr
