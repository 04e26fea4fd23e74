#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace setforge {

// ----------------------------------------------------------------------------
// Error types. Failures that indicate bad input or a broken environment throw;
// expression evaluation reports its domain failures through std::optional
// instead because rejection there is an expected, frequent outcome.
// ----------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad magic, version, or malformed structured content.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ChecksumError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Token stream ended before every operator received its arguments.
struct IncompleteSequence : ParseError {
    using ParseError::ParseError;
};

/// Tokens remained after a complete tree was parsed.
struct TrailingTokens : ParseError {
    using ParseError::ParseError;
};

/// A token that is not part of the dictionary.
struct UnknownToken : ParseError {
    using ParseError::ParseError;
};

struct LengthExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFiniteLoss : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyTestSet : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyTrainSet : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------------------
// Deterministic randomness. Every randomized stage receives an explicit seed;
// independent substreams are derived by hashing, never by sharing one engine,
// so dropping or reordering one consumer cannot shift another's draws.
// ----------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a) {
    return splitmix64(splitmix64(base) ^ (a + 0x632be59bd9b4e019ull));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(base, a), b);
}

inline Rng make_rng(std::uint64_t seed) {
    return Rng{seed};
}

}  // namespace setforge
