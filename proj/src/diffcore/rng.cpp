#include "flowtrpo/diffcore/rng.hpp"

#include <sstream>

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : engine_(mix_seed(seed)), normal_(0.0, 1.0), uniform_(0.0, 1.0) {}

Rng Rng::substream(std::uint64_t master_seed, std::string_view name) {
  // FNV-1a over the stream name.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return Rng(mix_seed(master_seed) ^ h);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw ConfigError("Rng::index over an empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

double Rng::gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }

Tensor Rng::normal_tensor(std::size_t rows, std::size_t cols) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = normal();
  return t;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_ << ' ' << normal_ << ' ' << uniform_;
  return os.str();
}

Rng Rng::deserialize(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng.engine_ >> rng.normal_ >> rng.uniform_;
  if (!is) throw ConfigError("malformed rng state");
  return rng;
}

}  // namespace flowtrpo
