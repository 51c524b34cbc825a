#pragma once

namespace dibjscc {

inline constexpr const char* kVersion = "1.0.0";

// Bumped whenever an on-disk layout (dataset cache, checkpoint, log record)
// changes incompatibly.
inline constexpr int kFormatVersion = 1;

}  // namespace dibjscc
