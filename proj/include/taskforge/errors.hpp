#pragma once

#include <stdexcept>
#include <string>

namespace taskforge {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Path codec
struct EmptyLevelError : Error { using Error::Error; };
struct TooDeepError : Error { using Error::Error; };

// Prompt templates
struct MissingSlotValueError : Error { using Error::Error; };

// Gateway
struct BackendUnavailableError : Error { using Error::Error; };
struct AuthFailureError : Error { using Error::Error; };
struct ResponseTooLargeError : Error { using Error::Error; };
struct UnreadableImageError : Error { using Error::Error; };
struct DimensionMismatchError : Error { using Error::Error; };

// Matching / parsing
struct ZeroNormError : Error { using Error::Error; };
struct UnparseableError : Error { using Error::Error; };
struct UnparseableVoteError : Error { using Error::Error; };
struct WrongPanelSizeError : Error { using Error::Error; };

// Sampler
struct AblateInfeasibleError : Error { using Error::Error; };

// Dataset IO
struct MalformedManifestError : Error { using Error::Error; };
struct UnresolvedImageError : Error { using Error::Error; };
struct OutputExistsError : Error { using Error::Error; };

// Pipeline
struct ConfigError : Error { using Error::Error; };
struct ConfigHashMismatchError : Error { using Error::Error; };
struct StageFailedThresholdError : Error { using Error::Error; };

}  // namespace taskforge
