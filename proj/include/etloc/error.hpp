#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace etloc {

// Base for every error raised by the library. `kind()` is a stable short name
// usable in diagnostics and tests.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define ETLOC_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  };

ETLOC_DEFINE_ERROR(IoError)
ETLOC_DEFINE_ERROR(NonMonotonicTime)
ETLOC_DEFINE_ERROR(OutOfBoundsFixation)
ETLOC_DEFINE_ERROR(NonPositiveRadius)
ETLOC_DEFINE_ERROR(UnknownRawLabel)
ETLOC_DEFINE_ERROR(UnknownLabel)
ETLOC_DEFINE_ERROR(InvalidRules)
ETLOC_DEFINE_ERROR(CorpusMismatch)
ETLOC_DEFINE_ERROR(DimensionMismatch)
ETLOC_DEFINE_ERROR(GridLargerThanImage)
ETLOC_DEFINE_ERROR(EmptyRaster)
ETLOC_DEFINE_ERROR(NonFiniteLoss)
ETLOC_DEFINE_ERROR(NoPositiveExamples)
ETLOC_DEFINE_ERROR(DegenerateLabels)
ETLOC_DEFINE_ERROR(InvalidConfig)
ETLOC_DEFINE_ERROR(DivergedLoss)
ETLOC_DEFINE_ERROR(InvalidArgument)

#undef ETLOC_DEFINE_ERROR

// A parse failure pinned to a 1-based line and column of the input file.
class MalformedRow : public Error {
 public:
  MalformedRow(std::string source, std::size_t line, std::size_t column,
               const std::string& what)
      : Error("MalformedRow", source + ":" + std::to_string(line) + ":" +
                                  std::to_string(column) + ": " + what),
        source_(std::move(source)),
        line_(line),
        column_(column) {}
  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string source_;
  std::size_t line_;
  std::size_t column_;
};

}  // namespace etloc
