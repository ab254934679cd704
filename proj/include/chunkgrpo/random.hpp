#pragma once

#include <cstdint>
#include <vector>

namespace chunkgrpo {

/// Counter-based random stream. Every draw is a pure function of
/// (seed, stream id, counter), so two streams built from the same triple
/// replay the same sequence and streams can be forked without coordination.
class RandomStream {
 public:
  RandomStream() = default;
  RandomStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Uniform integer in [0, n). Requires n > 0.
  std::uint64_t below(std::uint64_t n);
  double gaussian();

  /// Independent stream sharing this seed; `id` is mixed with the current
  /// stream id so nested forks stay distinct.
  RandomStream fork(std::uint64_t id) const;

  bool operator==(const RandomStream&) const = default;

 private:
  std::uint64_t word(std::uint64_t counter, std::uint64_t lane) const;

  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t counter_ = 0;
  std::uint64_t key_ = 0;
};

/// n standard normal samples; advances the stream by n.
std::vector<double> draw_gaussian(RandomStream& stream, std::size_t n);

}  // namespace chunkgrpo
