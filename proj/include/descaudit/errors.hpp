#pragma once

#include <stdexcept>
#include <string>

namespace descaudit {

// Error codes map onto CLI exit codes: Usage -> 1, input/schema -> 2,
// external-service failures -> 3.
enum class ErrorCode {
  // parsing / ingestion
  MissingTitle,
  MalformedLine,
  DuplicateKey,
  SchemaError,
  DuplicateId,
  IoError,
  // lexicon
  UnknownPlaceholder,
  // counterfactual
  NothingToSwap,
  AmbiguousAxis,
  GeneratorError,
  EmptySide,
  // classifier
  SingleClassDataset,
  EmptyVocabulary,
  // stats
  InvalidLevel,
  ZeroTrials,
  DegeneratePool,
  // flagging / scoring clients
  MissingTemplate,
  UnfilledSlot,
  ClientError,
  ScorerUnavailable,
  // cli
  Usage,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingTitle: return "MissingTitle";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnknownPlaceholder: return "UnknownPlaceholder";
    case ErrorCode::NothingToSwap: return "NothingToSwap";
    case ErrorCode::AmbiguousAxis: return "AmbiguousAxis";
    case ErrorCode::GeneratorError: return "GeneratorError";
    case ErrorCode::EmptySide: return "EmptySide";
    case ErrorCode::SingleClassDataset: return "SingleClassDataset";
    case ErrorCode::EmptyVocabulary: return "EmptyVocabulary";
    case ErrorCode::InvalidLevel: return "InvalidLevel";
    case ErrorCode::ZeroTrials: return "ZeroTrials";
    case ErrorCode::DegeneratePool: return "DegeneratePool";
    case ErrorCode::MissingTemplate: return "MissingTemplate";
    case ErrorCode::UnfilledSlot: return "UnfilledSlot";
    case ErrorCode::ClientError: return "ClientError";
    case ErrorCode::ScorerUnavailable: return "ScorerUnavailable";
    case ErrorCode::Usage: return "Usage";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, long line = -1)
      : std::runtime_error(format(code, message, line)),
        code_(code),
        line_(line) {}

  ErrorCode code() const { return code_; }

  // 1-based line number of the offending input line, or -1 when not
  // line-addressable.
  long line() const { return line_; }

 private:
  static std::string format(ErrorCode code, const std::string& message,
                            long line) {
    std::string out = to_string(code);
    if (line >= 0) {
      out += " (line " + std::to_string(line) + ")";
    }
    if (!message.empty()) {
      out += ": " + message;
    }
    return out;
  }

  ErrorCode code_;
  long line_;
};

}  // namespace descaudit
