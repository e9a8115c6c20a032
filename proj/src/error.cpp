#include "vitc/error.hpp"

namespace vitc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::InvalidProbability: return "INVALID_PROBABILITY";
    case ErrorCode::LabelOutOfRange: return "LABEL_OUT_OF_RANGE";
    case ErrorCode::NotScalar: return "NOT_SCALAR";
    case ErrorCode::MissingGrad: return "MISSING_GRAD";
    case ErrorCode::NotDivisible: return "NOT_DIVISIBLE";
    case ErrorCode::InvalidConfig: return "INVALID_CONFIG";
    case ErrorCode::AlreadyMasked: return "ALREADY_MASKED";
    case ErrorCode::InvalidRate: return "INVALID_RATE";
    case ErrorCode::AllDimsPruned: return "ALL_DIMS_PRUNED";
    case ErrorCode::InvalidRank: return "INVALID_RANK";
    case ErrorCode::InvalidPlacement: return "INVALID_PLACEMENT";
    case ErrorCode::MissingFile: return "MISSING_FILE";
    case ErrorCode::TruncatedRecord: return "TRUNCATED_RECORD";
    case ErrorCode::BadMagic: return "BAD_MAGIC";
    case ErrorCode::VersionMismatch: return "VERSION_MISMATCH";
    case ErrorCode::ShapeMismatch: return "SHAPE_MISMATCH";
    case ErrorCode::EmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::NonPositiveCount: return "NON_POSITIVE_COUNT";
    case ErrorCode::DegenerateBase: return "DEGENERATE_BASE";
    case ErrorCode::EmptyMasks: return "EMPTY_MASKS";
    case ErrorCode::UnknownSubcommand: return "UNKNOWN_SUBCOMMAND";
    case ErrorCode::BadFlag: return "BAD_FLAG";
    case ErrorCode::Io: return "IO_ERROR";
  }
  return "UNKNOWN";
}

}  // namespace vitc
