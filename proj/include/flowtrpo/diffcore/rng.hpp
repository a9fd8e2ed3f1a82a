#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "flowtrpo/diffcore/tensor.hpp"

namespace flowtrpo {

/// Seeded generator with serializable state. Named substreams derived from one
/// master seed are independent, so adding draws to one consumer never shifts another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  static Rng substream(std::uint64_t master_seed, std::string_view name);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n);
  double gamma(double shape);
  std::uint64_t next_u64() { return engine_(); }
  Tensor normal_tensor(std::size_t rows, std::size_t cols);

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.serialize() == b.serialize(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
};

/// splitmix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace flowtrpo
