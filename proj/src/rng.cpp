#include "fedtsd/rng.hpp"

#include <cmath>

#include "fedtsd/common.hpp"

namespace fedtsd {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t root, std::string_view name,
                       std::uint64_t a, std::uint64_t b) {
  // FNV-1a over the stream name folded into a splitmix chain.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t state = root;
  std::uint64_t out = splitmix64(state);
  state ^= h;
  out ^= splitmix64(state);
  state ^= a + 0x9e3779b97f4a7c15ULL;
  out ^= splitmix64(state);
  state ^= b + 0x7f4a7c15f39cc060ULL;
  out ^= splitmix64(state);
  return out;
}

double RngStream::normal() {
  // u1 in (0, 1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) throw ValueError("gamma shape must be positive");
  if (shape < 1.0) {
    // Boost to shape + 1 and scale back down.
    double u = 1.0 - uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  double d = shape - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    double v = t * t * t;
    double u = 1.0 - uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> RngStream::dirichlet(double concentration, int k) {
  if (k <= 0) throw ValueError("dirichlet needs at least one component");
  std::vector<double> out(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (auto& g : out) {
    g = gamma(concentration);
    sum += g;
  }
  if (sum <= 0.0) {
    // All draws underflowed; fall back to uniform proportions.
    for (auto& g : out) g = 1.0 / k;
    return out;
  }
  for (auto& g : out) g /= sum;
  return out;
}

int RngStream::uniform_int(int n) {
  if (n <= 0) throw ValueError("uniform_int upper bound must be positive");
  std::uint64_t un = static_cast<std::uint64_t>(n);
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

}  // namespace fedtsd
