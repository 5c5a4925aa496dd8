#pragma once

#include <stdexcept>
#include <string>

namespace mmp {

// Every failure surfaced by the library derives from Error. The CLI maps the
// category onto its exit code.
enum class ErrorKind {
  kUsage,       // caller broke an API or CLI contract
  kDimension,   // tensor shapes disagree
  kParameter,   // a scalar argument is out of range
  kConfig,      // configuration or architecture mismatch
  kCorpus,      // corpus content violates an invariant
  kFormat,      // a file does not match its format
  kSampling,    // a sampler cannot satisfy its request
  kEvaluation,  // evaluation preconditions not met
  kNumeric,     // NaN/Inf or a zero norm
  kIo,          // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

#define MMP_DEFINE_ERROR(Name, Kind)                           \
  class Name : public Error {                                  \
   public:                                                     \
    explicit Name(const std::string& what) : Error(Kind, what) {} \
  };

MMP_DEFINE_ERROR(UsageError, ErrorKind::kUsage)
MMP_DEFINE_ERROR(DimensionError, ErrorKind::kDimension)
MMP_DEFINE_ERROR(ParameterError, ErrorKind::kParameter)
MMP_DEFINE_ERROR(ConfigError, ErrorKind::kConfig)
MMP_DEFINE_ERROR(CorpusError, ErrorKind::kCorpus)
MMP_DEFINE_ERROR(FormatError, ErrorKind::kFormat)
MMP_DEFINE_ERROR(SamplingError, ErrorKind::kSampling)
MMP_DEFINE_ERROR(EvaluationError, ErrorKind::kEvaluation)
MMP_DEFINE_ERROR(NumericError, ErrorKind::kNumeric)
MMP_DEFINE_ERROR(IoError, ErrorKind::kIo)

#undef MMP_DEFINE_ERROR

}  // namespace mmp
