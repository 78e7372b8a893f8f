#pragma once

#include <stdexcept>
#include <string>

namespace absnav {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ABSNAV_DEFINE_ERROR(Name)            \
  class Name : public Error {                \
   public:                                   \
    explicit Name(const std::string& what)   \
        : Error(std::string(#Name ": ") + what) {} \
  };

ABSNAV_DEFINE_ERROR(AgentFault)
ABSNAV_DEFINE_ERROR(GoalBlocked)
ABSNAV_DEFINE_ERROR(NoDescent)
ABSNAV_DEFINE_ERROR(InvalidTransform)
ABSNAV_DEFINE_ERROR(EmptySet)
ABSNAV_DEFINE_ERROR(InvalidRecord)
ABSNAV_DEFINE_ERROR(NotApplicable)
ABSNAV_DEFINE_ERROR(ConfigError)
ABSNAV_DEFINE_ERROR(FormatError)

#undef ABSNAV_DEFINE_ERROR

}  // namespace absnav
