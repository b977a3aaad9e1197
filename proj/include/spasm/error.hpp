#pragma once

#include <stdexcept>
#include <string>

namespace spasm {

// Root of every error raised by the library. Callers that only care about
// "something in the pipeline failed" can catch this.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

#define SPASM_DEFINE_ERROR(Name)                                              \
  class Name : public Error {                                                 \
  public:                                                                     \
    using Error::Error;                                                       \
  }

// backend
SPASM_DEFINE_ERROR(BackendUnavailable);
SPASM_DEFINE_ERROR(EmptyCompletion);
SPASM_DEFINE_ERROR(EmbeddingDimensionMismatch);
SPASM_DEFINE_ERROR(MalformedVerdict);

// persona
SPASM_DEFINE_ERROR(PersonaExhausted);
SPASM_DEFINE_ERROR(CraftingContractViolation);
SPASM_DEFINE_ERROR(SchemaError);

// dialogue
SPASM_DEFINE_ERROR(EmptyUtterance);
SPASM_DEFINE_ERROR(UnknownAgent);

// metrics
SPASM_DEFINE_ERROR(ZeroVector);
SPASM_DEFINE_ERROR(UndefinedMetric);
SPASM_DEFINE_ERROR(NoClientContent);
SPASM_DEFINE_ERROR(JudgementFailed);

// store / cli
SPASM_DEFINE_ERROR(ConfigError);
SPASM_DEFINE_ERROR(FormatError);

#undef SPASM_DEFINE_ERROR

} // namespace spasm
