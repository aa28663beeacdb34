#ifndef THINOBS_RANDOM_HPP
#define THINOBS_RANDOM_HPP

#include <cstdint>
#include <limits>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

namespace thinobs {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based stream: output n is splitmix64(key + n * gamma), with the key
/// derived from (seed, stream, index). Distributions come from Boost.Random,
/// whose algorithms are fixed across platforms.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
      : key_(splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x632be59bd9b4e019ULL) ^ (index * 0x9e3779b97f4a7c15ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return splitmix64(key_ + (counter_++) * 0xd1b54a32d192ed03ULL); }

  double normal(double mean = 0.0, double sd = 1.0) {
    boost::random::normal_distribution<double> n(mean, sd);
    return n(*this);
  }
  double uniform(double a = 0.0, double b = 1.0) {
    boost::random::uniform_real_distribution<double> u(a, b);
    return u(*this);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace thinobs

#endif
