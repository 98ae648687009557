#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wuyun {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// SMF / score ingestion
struct MalformedFile : Error { using Error::Error; };
struct NoNotes : Error { using Error::Error; };
struct UnsupportedFormat : Error { using Error::Error; };

// JSON interchange
struct SchemaMismatch : Error { using Error::Error; };
struct InvalidField : Error { using Error::Error; };

// Preprocessing
struct UnknownKey : Error { using Error::Error; };
struct RejectedPiece : Error { using Error::Error; };

// Skeleton extraction
struct InvalidP : Error { using Error::Error; };

// Tokenization
struct VocabViolation : Error { using Error::Error; };

struct GrammarError : Error {
    std::size_t token_index;
    GrammarError(std::size_t index, const std::string& what)
        : Error("token " + std::to_string(index) + ": " + what), token_index(index) {}
};

// Models / training
struct ShapeMismatch : Error { using Error::Error; };
struct EmptySkeleton : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct VocabMismatch : Error { using Error::Error; };
struct SkeletonOverflow : Error { using Error::Error; };
struct ConstraintViolation : Error { using Error::Error; };

// Evaluation
struct BinningMismatch : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };

// Pipeline
struct MissingArtifact : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace wuyun
