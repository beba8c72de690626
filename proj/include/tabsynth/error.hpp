#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tabsynth {

// Every recoverable failure in the library is reported as an Error carrying
// one of these codes. Tests and callers dispatch on the code; the message is
// for humans.
enum class ErrorCode {
    // data_io
    MissingFile,
    MalformedData,
    UnknownLabelColumn,
    NonBinaryLabel,
    NegativeFeatureValue,
    ZeroK,
    InsufficientClassSamples,
    KTooLarge,
    KTooSmall,
    // building blocks
    NonFiniteInput,
    NonFiniteGradient,
    OddDim,
    DimensionMismatch,
    StepOutOfRange,
    UnknownKind,
    // generative models
    ConfigInvalid,
    DivergedTraining,
    UntrainedModel,
    SchemaMismatch,
    InsufficientRows,
    // classifiers
    SingleClassTrainingSet,
    // metrics
    LengthMismatch,
    ClassAbsent,
    // evaluation
    AllFoldsFailed,
    // monitoring
    SamplerUnavailable,
    // reporting
    UnknownClassifier,
    MissingCell,
    EmptyTrace,
    TooFewSamples,
    // cli / presets
    SchemaViolation,
    UnknownPreset,
    UnknownModelFamily,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace tabsynth
