#pragma once

#include <stdexcept>
#include <string>

namespace twoscale {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TWOSCALE_DEFINE_ERROR(Name)                           \
  class Name : public Error {                                 \
   public:                                                    \
    explicit Name(const std::string& what) : Error(what) {}  \
  }

// argument outside the domain of a Phi function or entropy
TWOSCALE_DEFINE_ERROR(DomainError);
// operation not defined for this Phi generator
TWOSCALE_DEFINE_ERROR(Unsupported);
TWOSCALE_DEFINE_ERROR(SamplerUnavailable);
TWOSCALE_DEFINE_ERROR(BadStep);
TWOSCALE_DEFINE_ERROR(NotSPD);
TWOSCALE_DEFINE_ERROR(RejectionInfeasible);
TWOSCALE_DEFINE_ERROR(NonUnitProbe);
TWOSCALE_DEFINE_ERROR(BadConfig);
// no closed-form law or expectation for the request
TWOSCALE_DEFINE_ERROR(Unavailable);
TWOSCALE_DEFINE_ERROR(ConfigError);

#undef TWOSCALE_DEFINE_ERROR

}  // namespace twoscale
