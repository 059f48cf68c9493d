#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dodrio {

enum class ErrorCode {
  MissingManifest,
  MalformedManifest,
  DanglingAttentionRef,
  UnknownInstance,
  UnknownHead,
  HeaderShapeMismatch,
  MalformedAttention,
  SpansNotPartition,
  DegenerateSaliency,
  EmptyCorpus,
  TooShort,
  LengthMismatch,
  MixedProjectionSources,
  MissingEmbeddings,
  BadSelector,
  Io,
};

constexpr std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingManifest: return "MISSING_MANIFEST";
    case ErrorCode::MalformedManifest: return "MALFORMED_MANIFEST";
    case ErrorCode::DanglingAttentionRef: return "DANGLING_ATTENTION_REF";
    case ErrorCode::UnknownInstance: return "UNKNOWN_INSTANCE";
    case ErrorCode::UnknownHead: return "UNKNOWN_HEAD";
    case ErrorCode::HeaderShapeMismatch: return "HEADER_SHAPE_MISMATCH";
    case ErrorCode::MalformedAttention: return "MALFORMED_ATTENTION";
    case ErrorCode::SpansNotPartition: return "SPANS_NOT_PARTITION";
    case ErrorCode::DegenerateSaliency: return "DEGENERATE_SALIENCY";
    case ErrorCode::EmptyCorpus: return "EMPTY_CORPUS";
    case ErrorCode::TooShort: return "TOO_SHORT";
    case ErrorCode::LengthMismatch: return "LENGTH_MISMATCH";
    case ErrorCode::MixedProjectionSources: return "MIXED_PROJECTION_SOURCES";
    case ErrorCode::MissingEmbeddings: return "MISSING_EMBEDDINGS";
    case ErrorCode::BadSelector: return "BAD_SELECTOR";
    case ErrorCode::Io: return "IO_ERROR";
  }
  return "UNKNOWN";
}

/// Every failure raised by the engine carries one of the codes above so
/// callers (CLI exit status, HTTP error bodies) can map it without parsing
/// the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(code_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace dodrio
