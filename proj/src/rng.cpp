#include "wtslab/rng.hpp"

#include <cmath>
#include <numbers>

#include "wtslab/common.hpp"

namespace wtslab {
namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// SplitMix64 finalizer.
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

uint64_t RngState::next_u64() {
  // Hash-combine chain over (seed, stream, counter); each input word passes
  // through the finalizer so low-entropy seeds still decorrelate.
  uint64_t h = mix64(seed + kGolden);
  h = mix64(h + stream_id * 0xd1b54a32d192ed03ull);
  h = mix64(h + counter * kGolden);
  ++counter;
  return h;
}

double RngState::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::next_unit_open_low() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngState::next_gaussian() {
  const double u1 = next_unit_open_low();
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t RngState::next_below(uint64_t n) {
  // Rejection sampling to stay unbiased.
  if (n == 0) return 0;
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

RngState rng_derive(const RngState& root, std::string_view label) {
  RngState out;
  out.seed = root.seed;
  out.stream_id = mix64(root.stream_id * kGolden + fnv1a64(label));
  out.counter = 0;
  return out;
}

std::vector<double> sample_gaussian(RngState& rng, size_t n, double mean, double std) {
  if (std < 0.0) throw ConfigError("sample_gaussian: std must be >= 0, got " + std::to_string(std));
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = mean + std * rng.next_gaussian();
  return out;
}

std::vector<size_t> shuffled_indices(RngState& rng, size_t n) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.next_below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace wtslab
