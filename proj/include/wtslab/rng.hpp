#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace wtslab {

// Counter-based deterministic generator. Every draw is a pure hash of
// (seed, stream_id, counter), so a state value always reproduces the same
// sequence regardless of platform, and sub-streams derived from distinct
// labels never share state. Mixing is the SplitMix64 finalizer applied to an
// additive combine of the three words.
struct RngState {
  uint64_t seed = 0;
  uint64_t stream_id = 0;
  uint64_t counter = 0;

  uint64_t next_u64();

  /// Uniform double in [0, 1).
  double next_unit();

  /// Uniform double in (0, 1]; never zero, safe under log().
  double next_unit_open_low();

  /// Standard normal via Box-Muller (two uniforms per draw).
  double next_gaussian();

  /// Uniform integer in [0, n).
  uint64_t next_below(uint64_t n);
};

/// Deterministic sub-stream: hashes the label into a fresh stream_id.
/// Distinct labels give distinct streams; counter restarts at zero.
RngState rng_derive(const RngState& root, std::string_view label);

/// n i.i.d. draws from N(mean, std^2). std == 0 returns a constant vector.
/// Negative std is a parameter error. The std-1 output scaled by std plus
/// mean is returned exactly (same underlying uniforms for any std).
std::vector<double> sample_gaussian(RngState& rng, size_t n, double mean, double std);

/// Fisher-Yates shuffle of indices [0, n), seeded by rng.
std::vector<size_t> shuffled_indices(RngState& rng, size_t n);

}  // namespace wtslab
