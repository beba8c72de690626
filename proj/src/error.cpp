#include "tabsynth/error.hpp"

namespace tabsynth {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingFile: return "MissingFile";
        case ErrorCode::MalformedData: return "MalformedData";
        case ErrorCode::UnknownLabelColumn: return "UnknownLabelColumn";
        case ErrorCode::NonBinaryLabel: return "NonBinaryLabel";
        case ErrorCode::NegativeFeatureValue: return "NegativeFeatureValue";
        case ErrorCode::ZeroK: return "ZeroK";
        case ErrorCode::InsufficientClassSamples: return "InsufficientClassSamples";
        case ErrorCode::KTooLarge: return "KTooLarge";
        case ErrorCode::KTooSmall: return "KTooSmall";
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::OddDim: return "OddDim";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::StepOutOfRange: return "StepOutOfRange";
        case ErrorCode::UnknownKind: return "UnknownKind";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::DivergedTraining: return "DivergedTraining";
        case ErrorCode::UntrainedModel: return "UntrainedModel";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::InsufficientRows: return "InsufficientRows";
        case ErrorCode::SingleClassTrainingSet: return "SingleClassTrainingSet";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::ClassAbsent: return "ClassAbsent";
        case ErrorCode::AllFoldsFailed: return "AllFoldsFailed";
        case ErrorCode::SamplerUnavailable: return "SamplerUnavailable";
        case ErrorCode::UnknownClassifier: return "UnknownClassifier";
        case ErrorCode::MissingCell: return "MissingCell";
        case ErrorCode::EmptyTrace: return "EmptyTrace";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::UnknownPreset: return "UnknownPreset";
        case ErrorCode::UnknownModelFamily: return "UnknownModelFamily";
    }
    return "UnknownError";
}

} // namespace tabsynth
