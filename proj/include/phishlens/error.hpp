#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace phishlens {

enum class ErrorKind {
  EmptyInput,
  MalformedUrl,
  FileUnreadable,
  NoUrlsFound,
  SchemaMismatch,
  SingleClassData,
  UnlabeledRow,
  KindMismatch,
  CorruptModel,
  InvalidConfig,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::MalformedUrl: return "MalformedUrl";
    case ErrorKind::FileUnreadable: return "FileUnreadable";
    case ErrorKind::NoUrlsFound: return "NoUrlsFound";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::SingleClassData: return "SingleClassData";
    case ErrorKind::UnlabeledRow: return "UnlabeledRow";
    case ErrorKind::KindMismatch: return "KindMismatch";
    case ErrorKind::CorruptModel: return "CorruptModel";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

// Base of every error the library throws. All of them are data or usage
// problems; anything else escaping is a bug.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <ErrorKind K>
class TypedError : public Error {
 public:
  explicit TypedError(const std::string& what) : Error(K, what) {}
};

using EmptyInput = TypedError<ErrorKind::EmptyInput>;
using MalformedUrl = TypedError<ErrorKind::MalformedUrl>;
using FileUnreadable = TypedError<ErrorKind::FileUnreadable>;
using NoUrlsFound = TypedError<ErrorKind::NoUrlsFound>;
using SchemaMismatch = TypedError<ErrorKind::SchemaMismatch>;
using SingleClassData = TypedError<ErrorKind::SingleClassData>;
using UnlabeledRow = TypedError<ErrorKind::UnlabeledRow>;
using KindMismatch = TypedError<ErrorKind::KindMismatch>;
using CorruptModel = TypedError<ErrorKind::CorruptModel>;
using InvalidConfig = TypedError<ErrorKind::InvalidConfig>;

}  // namespace phishlens
