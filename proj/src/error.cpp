#include "ideaeval/error.hpp"

namespace ideaeval {

const char* to_string(ProviderErrorKind kind) noexcept {
  switch (kind) {
    case ProviderErrorKind::Authentication: return "authentication failure";
    case ProviderErrorKind::RateLimit: return "rate limit exhausted";
    case ProviderErrorKind::Timeout: return "timeout";
    case ProviderErrorKind::Transport: return "transport failure";
    case ProviderErrorKind::MalformedResponse: return "malformed provider response";
    case ProviderErrorKind::Request: return "request rejected";
  }
  return "provider error";
}

}  // namespace ideaeval
