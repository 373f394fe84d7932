#include "oadg/error.hpp"

namespace oadg {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingFile: return "MissingFile";
        case ErrorCode::MalformedJson: return "MalformedJson";
        case ErrorCode::BoxOutOfBounds: return "BoxOutOfBounds";
        case ErrorCode::UnknownClassId: return "UnknownClassId";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::DegenerateImage: return "DegenerateImage";
        case ErrorCode::WrongOpCategory: return "WrongOpCategory";
        case ErrorCode::UnknownKind: return "UnknownKind";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::ZeroNormFeature: return "ZeroNormFeature";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::NotOnSimplex: return "NotOnSimplex";
        case ErrorCode::PairingMismatch: return "PairingMismatch";
        case ErrorCode::IncompleteMatrix: return "IncompleteMatrix";
        case ErrorCode::EmptyClass: return "EmptyClass";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

}  // namespace oadg
