#pragma once

#include <stdexcept>
#include <string>

namespace priorseg {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorClass {
  input,      // malformed or inconsistent user input (exit 1)
  runtime,    // numeric or training failure (exit 2)
  transport,  // LLM provider unreachable (exit 3)
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  [[nodiscard]] virtual ErrorClass error_class() const noexcept { return ErrorClass::input; }
  [[nodiscard]] virtual const char* kind() const noexcept { return "error"; }
};

#define PRIORSEG_DEFINE_ERROR(Name, Kind, Class)                                   \
  class Name : public Error {                                                     \
   public:                                                                        \
    using Error::Error;                                                           \
    [[nodiscard]] ErrorClass error_class() const noexcept override { return Class; } \
    [[nodiscard]] const char* kind() const noexcept override { return Kind; }      \
  };

PRIORSEG_DEFINE_ERROR(ParseError, "parse", ErrorClass::input)
PRIORSEG_DEFINE_ERROR(SchemaError, "schema", ErrorClass::input)
PRIORSEG_DEFINE_ERROR(ValidationError, "validation", ErrorClass::input)
PRIORSEG_DEFINE_ERROR(LookupError, "lookup", ErrorClass::input)
PRIORSEG_DEFINE_ERROR(InputError, "input", ErrorClass::input)
PRIORSEG_DEFINE_ERROR(DimensionError, "dimension", ErrorClass::input)
PRIORSEG_DEFINE_ERROR(ConfigError, "config", ErrorClass::input)
PRIORSEG_DEFINE_ERROR(SynthesisError, "synthesis", ErrorClass::input)
PRIORSEG_DEFINE_ERROR(NumericError, "numeric", ErrorClass::runtime)
PRIORSEG_DEFINE_ERROR(TransportError, "transport", ErrorClass::transport)

#undef PRIORSEG_DEFINE_ERROR

/// Raised when a term cannot be turned into a valid entry. Keeps the last
/// raw model response so it can be audited.
class ExtractionError : public Error {
 public:
  ExtractionError(const std::string& what, std::string raw_response, int attempts)
      : Error(what), raw_response_(std::move(raw_response)), attempts_(attempts) {}
  [[nodiscard]] const char* kind() const noexcept override { return "extraction"; }
  [[nodiscard]] const std::string& raw_response() const noexcept { return raw_response_; }
  [[nodiscard]] int attempts() const noexcept { return attempts_; }

 private:
  std::string raw_response_;
  int attempts_;
};

/// Empty-graph failure from a batch extraction where every term failed.
class EmptyGraphError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* kind() const noexcept override { return "empty_graph"; }
};

inline int exit_code_for(ErrorClass c) noexcept {
  switch (c) {
    case ErrorClass::input: return 1;
    case ErrorClass::runtime: return 2;
    case ErrorClass::transport: return 3;
  }
  return 2;
}

}  // namespace priorseg
