#include "lsplit/error.hpp"

namespace lsplit {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::MissingRequiredField: return "MissingRequiredField";
    case ErrorCode::BadTaskConfig: return "BadTaskConfig";
    case ErrorCode::BadK: return "BadK";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptyScoreTarget: return "EmptyScoreTarget";
    case ErrorCode::ScorerUnreachable: return "ScorerUnreachable";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::MalformedScore: return "MalformedScore";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::BadSplitConfig: return "BadSplitConfig";
    case ErrorCode::MissingScore: return "MissingScore";
    case ErrorCode::MissingTemplate: return "MissingTemplate";
    case ErrorCode::MissingStructure: return "MissingStructure";
    case ErrorCode::ConstraintUnsatisfiable: return "ConstraintUnsatisfiable";
    case ErrorCode::LexError: return "LexError";
    case ErrorCode::EmptyProgram: return "EmptyProgram";
    case ErrorCode::BadAlpha: return "BadAlpha";
    case ErrorCode::BadDistribution: return "BadDistribution";
    case ErrorCode::BadWeights: return "BadWeights";
    case ErrorCode::MalformedTree: return "MalformedTree";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::MalformedResource: return "MalformedResource";
    case ErrorCode::BadArguments: return "BadArguments";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string detail)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
      code_(code),
      detail_(std::move(detail)) {}

}  // namespace lsplit
