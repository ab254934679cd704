#include "chunkgrpo/random.hpp"

#include <cmath>
#include <numbers>

#include "chunkgrpo/error.hpp"

namespace chunkgrpo {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double to_open_unit(std::uint64_t bits) {
  // 53 random bits, offset by half an ulp so 0 and 1 are unreachable.
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter)
    : seed_(seed), stream_id_(stream_id), counter_(counter),
      key_(mix64(mix64(seed + kGolden) ^ (stream_id * kGolden + 0x632BE59BD9B4E019ULL))) {}

std::uint64_t RandomStream::word(std::uint64_t counter, std::uint64_t lane) const {
  return mix64(mix64(key_ ^ (counter * kGolden)) + lane * 0xD6E8FEB86659FD93ULL);
}

std::uint64_t RandomStream::next_u64() { return word(counter_++, 0); }

double RandomStream::uniform() { return to_open_unit(next_u64()); }

std::uint64_t RandomStream::below(std::uint64_t n) {
  if (n == 0) {
    throw InputError("RandomStream::below: n must be positive");
  }
  // Lemire-style rejection keeps the result unbiased.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) {
      return r % n;
    }
  }
}

double RandomStream::gaussian() {
  // Box-Muller on two lanes of one counter value.
  const std::uint64_t c = counter_++;
  const double u1 = to_open_unit(word(c, 1));
  const double u2 = to_open_unit(word(c, 2));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RandomStream RandomStream::fork(std::uint64_t id) const {
  return RandomStream(seed_, mix64(stream_id_ * 0xA0761D6478BD642FULL + id + 1));
}

std::vector<double> draw_gaussian(RandomStream& stream, std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) {
    v = stream.gaussian();
  }
  return out;
}

}  // namespace chunkgrpo
