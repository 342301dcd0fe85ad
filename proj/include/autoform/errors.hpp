#pragma once

#include <stdexcept>
#include <string>

namespace autoform {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// corpus ingest
class PatternInvalid : public Error { public: using Error::Error; };
class JudgeUnparseable : public Error { public: using Error::Error; };

// gateway
class AuthMissing : public Error { public: using Error::Error; };
class RateLimitedExhausted : public Error { public: using Error::Error; };
class BackendError : public Error { public: using Error::Error; };
class TimeoutError : public Error { public: using Error::Error; };
class ScriptMiss : public Error { public: using Error::Error; };

// transient backend failure, eligible for retry with backoff
class TransientError : public Error { public: using Error::Error; };

// prompting / output parsing
class NoTheoremFound : public Error { public: using Error::Error; };
class VerdictUnparseable : public Error { public: using Error::Error; };
class RatingUnparseable : public Error { public: using Error::Error; };

// lean verification
class LaunchFailed : public Error { public: using Error::Error; };
class StartupTimeout : public Error { public: using Error::Error; };
class SessionDead : public Error { public: using Error::Error; };
class MalformedResponse : public Error { public: using Error::Error; };

// pipeline
class ServiceUnavailable : public Error { public: using Error::Error; };
class ConfigMismatch : public Error { public: using Error::Error; };

// benchmarking / reporting
class SampleTooLarge : public Error { public: using Error::Error; };
class ProverUnavailable : public Error { public: using Error::Error; };
class EmptyLog : public Error { public: using Error::Error; };
class CorpusMismatch : public Error { public: using Error::Error; };

}  // namespace autoform
