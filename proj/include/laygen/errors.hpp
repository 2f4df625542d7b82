#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace laygen {

// Base of every error raised by the library. `kind()` is a stable name used
// by the CLI and the Python bindings.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Bad input data: malformed corpora, out-of-range values, bad sequences.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered during training or optimization.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error("NumericalError", what) {}
};

// Programmer-level contract violations (shapes, configuration).
class UsageError : public Error {
 public:
  using Error::Error;
};

#define LAYGEN_DATA_ERROR(Name)                                             \
  class Name : public DataError {                                           \
   public:                                                                  \
    explicit Name(const std::string& what) : DataError(#Name, what) {}      \
  }

#define LAYGEN_USAGE_ERROR(Name)                                            \
  class Name : public UsageError {                                          \
   public:                                                                  \
    explicit Name(const std::string& what) : UsageError(#Name, what) {}     \
  }

LAYGEN_DATA_ERROR(InvalidCoordinate);
LAYGEN_DATA_ERROR(InvalidBin);
LAYGEN_DATA_ERROR(LayoutTooLong);
LAYGEN_DATA_ERROR(TruncatedElement);
LAYGEN_DATA_ERROR(UnknownCategory);
LAYGEN_DATA_ERROR(EmptyBatch);
LAYGEN_DATA_ERROR(EmptyLayout);
LAYGEN_DATA_ERROR(IncompatibleCheckpoint);
LAYGEN_DATA_ERROR(ChecksumError);
LAYGEN_DATA_ERROR(VocabError);
LAYGEN_DATA_ERROR(SequenceTooLong);
LAYGEN_DATA_ERROR(DegenerateDistribution);

LAYGEN_USAGE_ERROR(ShapeError);
LAYGEN_USAGE_ERROR(NotScalar);
LAYGEN_USAGE_ERROR(InvalidVocab);
LAYGEN_USAGE_ERROR(InvalidP);
LAYGEN_USAGE_ERROR(InvalidConfig);

#undef LAYGEN_DATA_ERROR
#undef LAYGEN_USAGE_ERROR

class MalformedSequence : public DataError {
 public:
  MalformedSequence(std::size_t position, std::string expected_kind, int got_token)
      : DataError("MalformedSequence",
                  "position " + std::to_string(position) + ": expected " + expected_kind +
                      ", got token " + std::to_string(got_token)),
        position_(position),
        expected_kind_(std::move(expected_kind)),
        got_token_(got_token) {}

  std::size_t position() const noexcept { return position_; }
  const std::string& expected_kind() const noexcept { return expected_kind_; }
  int got_token() const noexcept { return got_token_; }

 private:
  std::size_t position_;
  std::string expected_kind_;
  int got_token_;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("ParseError", "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace laygen
