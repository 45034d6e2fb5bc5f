#pragma once

#include <cstdint>
#include <limits>

namespace soel {

// Counter-based random stream. The n-th draw depends only on (seed, stream, n),
// so two consumers with distinct stream ids never interfere and a stream can be
// repositioned without replaying earlier draws.
class RandomSource {
 public:
  using result_type = std::uint64_t;

  RandomSource() = default;
  RandomSource(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return At(counter_++); }

  // Raw 64-bit value at an absolute draw index; does not advance the stream.
  result_type At(std::uint64_t index) const;

  // Uniform in [0, 1) with 53 bits of resolution.
  double Uniform();
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t UniformInt(std::uint64_t n);
  bool Bernoulli(double p) { return Uniform() < p; }
  double Normal(double mean = 0.0, double stddev = 1.0);

  // Independent child stream; children of distinct (stream, label) pairs do not collide.
  RandomSource Fork(std::uint64_t label) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t Mix64(std::uint64_t x);

}  // namespace soel
