#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mhcl/matrix.hpp"

namespace mhcl {

/// Deterministic RNG. mt19937_64 output is pinned by the standard; all
/// transforms (uniform doubles, bounded ints, shuffles) are done by hand so
/// streams are identical across platforms and library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next() { return gen_(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 gen_;
};

/// Uniform Xavier/Glorot: entries in +-sqrt(6/(rows+cols)).
Matrix xavier_init(std::size_t rows, std::size_t cols, Rng& rng);
Matrix xavier_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Adam with bias correction. Moment buffers are allocated on first use and
/// keyed by parameter position, so the parameter list must be stable.
struct AdamState {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (applied to weights, not gradients)
  std::uint64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state);

}  // namespace mhcl
