#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace fedtsd {

// Derives the seed of a named sub-stream from a root seed. Every random
// decision in an experiment draws from its own stream ("data", "init",
// "client" i at round r, ...) so that adding clients or toggling server-side
// sampling never perturbs unrelated draws.
std::uint64_t mix_seed(std::uint64_t root, std::string_view name,
                       std::uint64_t a = 0, std::uint64_t b = 0);

// All distributions are implemented by hand on top of the raw generator so a
// given seed produces the same draw sequence on every platform and toolchain.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  static RngStream derive(std::uint64_t root, std::string_view name,
                          std::uint64_t a = 0, std::uint64_t b = 0) {
    return RngStream(mix_seed(root, name, a, b));
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal (Box-Muller; the second variate is discarded so the
  // stream has no hidden state).
  double normal();

  // Gamma(shape, 1), Marsaglia-Tsang squeeze.
  double gamma(double shape);

  // Symmetric Dirichlet over k components.
  std::vector<double> dirichlet(double concentration, int k);

  // Uniform integer in [0, n). Rejection sampling, n > 0.
  int uniform_int(int n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace fedtsd
