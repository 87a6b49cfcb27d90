#pragma once

#include <stdexcept>
#include <string>

namespace shapex {

// Error categories map onto CLI exit codes and HTTP statuses.
enum class ErrorKind { config, argument, state, data, numeric, format, not_found, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SHAPEX_DEFINE_ERROR(Name, Kind)                                      \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& message) : Error(ErrorKind::Kind, message) {} \
  };

SHAPEX_DEFINE_ERROR(ConfigError, config)
SHAPEX_DEFINE_ERROR(ArgumentError, argument)
SHAPEX_DEFINE_ERROR(StateError, state)
SHAPEX_DEFINE_ERROR(DataError, data)
SHAPEX_DEFINE_ERROR(FormatError, format)
SHAPEX_DEFINE_ERROR(NotFoundError, not_found)
SHAPEX_DEFINE_ERROR(IoError, io)

#undef SHAPEX_DEFINE_ERROR

class NumericError : public Error {
 public:
  NumericError(const std::string& message, long index = -1)
      : Error(ErrorKind::numeric, message), index_(index) {}
  // Epoch or iteration at which the non-finite value appeared, -1 if unknown.
  long index() const noexcept { return index_; }

 private:
  long index_;
};

const char* to_string(ErrorKind kind);

// Rethrows an error of the same kind with extra context prepended.
[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context);

}  // namespace shapex
