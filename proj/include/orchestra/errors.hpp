#pragma once

#include <stdexcept>
#include <string>

namespace orchestra {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Definition-time errors.
struct ParseError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };
struct InterfaceClash : ValidationError { using ValidationError::ValidationError; };

// Wire errors.
struct EncodeError : Error { using Error::Error; };
struct DecodeError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// Runtime/infrastructure errors.
struct StartupError : Error { using Error::Error; };
struct StorageError : Error { using Error::Error; };
struct NameClash : Error { using Error::Error; };
struct UnknownService : Error { using Error::Error; };
struct BudgetExceeded : Error { using Error::Error; };

/// A named fault raised while a session executes. Faults travel through the
/// scope tree and across the wire by name only.
class Fault : public Error {
 public:
  explicit Fault(std::string name, const std::string& detail = {})
      : Error(detail.empty() ? name : name + ": " + detail), name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

namespace faults {
inline constexpr const char* kUndefinedVariable = "UndefinedVariable";
inline constexpr const char* kDivisionByZero = "DivisionByZero";
inline constexpr const char* kTypeFault = "TypeFault";
inline constexpr const char* kArithmeticFault = "ArithmeticFault";
inline constexpr const char* kIoFault = "IOFault";
inline constexpr const char* kProtocolFault = "ProtocolFault";
inline constexpr const char* kHandlerFault = "HandlerFault";
inline constexpr const char* kCorrelationError = "CorrelationError";
inline constexpr const char* kUnknownOperation = "UnknownOperation";
inline constexpr const char* kUnknownResource = "UnknownResource";
inline constexpr const char* kTerminated = "Terminated";
inline constexpr const char* kStorageError = "StorageError";
}  // namespace faults

}  // namespace orchestra
