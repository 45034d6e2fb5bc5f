#include "soel/random.h"

#include <cmath>
#include <numbers>

namespace soel {

std::uint64_t Mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RandomSource::result_type RandomSource::At(std::uint64_t index) const {
  const std::uint64_t key = Mix64(seed_ ^ Mix64(stream_ + 0x632be59bd9b4e019ULL));
  return Mix64(key + Mix64(index ^ 0xd1b54a32d192ed03ULL));
}

double RandomSource::Uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomSource::UniformInt(std::uint64_t n) {
  // rejection sampling keeps the draw exactly uniform
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t r = (*this)();
  while (r >= limit) r = (*this)();
  return r % n;
}

double RandomSource::Normal(double mean, double stddev) {
  double u1 = Uniform();
  while (u1 <= 0.0) u1 = Uniform();
  const double u2 = Uniform();
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RandomSource RandomSource::Fork(std::uint64_t label) const {
  return RandomSource(seed_, Mix64(stream_ * 0x9e3779b97f4a7c15ULL + Mix64(label + 1)));
}

}  // namespace soel
