#pragma once

#include <stdexcept>
#include <string>

namespace opcode_sieve {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// corpus
struct MalformedListing : Error { using Error::Error; };
struct EmptyMnemonic : Error { using Error::Error; };
struct EmptyOpcodeStream : Error { using Error::Error; };
struct IoFailure : Error { using Error::Error; };
struct FormatVersionMismatch : Error { using Error::Error; };
struct MalformedRecord : Error { using Error::Error; };

// grouping
struct OutOfRange : Error { using Error::Error; };

// features
struct EmptyClassInGroup : Error { using Error::Error; };
struct NoEligibleGroups : Error { using Error::Error; };

// learn
struct EmptyTrainingSet : Error { using Error::Error; };
struct InconsistentVectorLength : Error { using Error::Error; };
struct FingerprintMismatch : Error { using Error::Error; };

// eval
struct TooFewSamples : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };

// synth / config
struct InvalidSpec : Error { using Error::Error; };

} // namespace opcode_sieve
