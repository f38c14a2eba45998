#pragma once

#include <stdexcept>
#include <string>

namespace ideaeval {

/// Input failed a schema or invariant check. Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A lookup (paper, session, idea key, run) did not resolve.
class NotFoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A write collided with existing immutable state (duplicate rating).
class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ProviderErrorKind { Authentication, RateLimit, Timeout, Transport, MalformedResponse, Request };

const char* to_string(ProviderErrorKind kind) noexcept;

/// Failure talking to a chat or embedding backend. Maps to CLI exit code 3.
class ProviderError : public std::runtime_error {
 public:
  ProviderError(ProviderErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ProviderErrorKind kind() const noexcept { return kind_; }

  /// Rate-limit, timeout and transport failures are worth another attempt.
  bool retryable() const noexcept {
    return kind_ == ProviderErrorKind::RateLimit || kind_ == ProviderErrorKind::Timeout ||
           kind_ == ProviderErrorKind::Transport;
  }

 private:
  ProviderErrorKind kind_;
};

/// The model answered but no bullet or enumerated idea could be parsed out.
class NoIdeasParsedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage aborted on one item. Maps to CLI exit code 4.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, std::string item, const std::string& cause)
      : std::runtime_error("stage '" + stage + "' failed on '" + item + "': " + cause),
        stage_(std::move(stage)),
        item_(std::move(item)) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::string& item() const noexcept { return item_; }

 private:
  std::string stage_;
  std::string item_;
};

}  // namespace ideaeval
