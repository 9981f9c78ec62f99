#include "mhcl/optim.hpp"

#include <cmath>

namespace mhcl {

Matrix xavier_init(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows < 1 || cols < 1) fail("contract", "xavier_init needs positive dimensions");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (auto& x : m.data) x = rng.uniform(-bound, bound);
  return m;
}

Matrix xavier_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  return xavier_init(rows, cols, rng);
}

void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state) {
  if (params.size() != grads.size()) fail("contract", "adam_step param/grad count mismatch");
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows, p->cols);
      state.v.emplace_back(p->rows, p->cols);
    }
  }
  if (state.m.size() != params.size()) fail("contract", "adam_step state size mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    const Matrix& g = *grads[k];
    Matrix& m = state.m[k];
    Matrix& v = state.v[k];
    if (!p.same_shape(g) || !p.same_shape(m))
      fail("shape", "adam_step tensor shapes disagree");
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = g.data[i];
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * gi;
      v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= state.lr * (mhat / (std::sqrt(vhat) + state.eps) +
                               state.weight_decay * p.data[i]);
    }
  }
}

}  // namespace mhcl
