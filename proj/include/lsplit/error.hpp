#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lsplit {

// Every failure the toolkit reports carries one of these codes. The CLI turns
// them into machine-readable error records.
enum class ErrorCode {
  // ingestion
  MalformedRecord,
  DuplicateId,
  MissingRequiredField,
  BadTaskConfig,
  // scoring
  BadK,
  EmptyCorpus,
  EmptyScoreTarget,
  ScorerUnreachable,
  ProtocolViolation,
  MalformedScore,
  UnknownId,
  // splitting
  BadSplitConfig,
  MissingScore,
  MissingTemplate,
  MissingStructure,
  ConstraintUnsatisfiable,
  // sql-structure
  LexError,
  EmptyProgram,
  // analysis
  BadAlpha,
  BadDistribution,
  BadWeights,
  MalformedTree,
  EmptyText,
  MalformedResource,
  // cli / io
  BadArguments,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail);

  ErrorCode code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace lsplit
