#include "paravul/error.hpp"

namespace paravul {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::EmptyContract: return "EmptyContract";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::SchemaError: return "SchemaError";
        case ErrorKind::UnknownLabel: return "UnknownLabel";
        case ErrorKind::EmptyCorpus: return "EmptyCorpus";
        case ErrorKind::InvalidParameter: return "InvalidParameter";
        case ErrorKind::EmptyFragment: return "EmptyFragment";
        case ErrorKind::ZeroVector: return "ZeroVector";
        case ErrorKind::NoFragments: return "NoFragments";
        case ErrorKind::EmptyStore: return "EmptyStore";
        case ErrorKind::ShapeError: return "ShapeError";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::NumericError: return "NumericError";
        case ErrorKind::AllDetectorsFailed: return "AllDetectorsFailed";
        case ErrorKind::StageError: return "StageError";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace paravul
