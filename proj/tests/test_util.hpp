#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mhcl/optim.hpp"
#include "mhcl/tape.hpp"

namespace mhcl::testutil {

// Builds a scalar loss from leaf Vars and checks every tape gradient against
// central finite differences. Returns the maximum relative error seen.
inline double fd_check(std::vector<Matrix> inputs,
                       const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                       double h = 1e-6) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
  Var loss = build(tape, leaves);
  tape.backward(loss);
  std::vector<Matrix> grads;
  for (Var v : leaves) grads.push_back(tape.grad(v));

  double worst = 0.0;
  for (std::size_t li = 0; li < inputs.size(); ++li) {
    for (std::size_t k = 0; k < inputs[li].numel(); ++k) {
      auto eval = [&](double delta) {
        std::vector<Matrix> shifted = inputs;
        shifted[li].data[k] += delta;
        Tape t2;
        std::vector<Var> vs;
        for (const auto& m : shifted) vs.push_back(t2.leaf(m));
        return t2.value(build(t2, vs)).item();
      };
      double fd = (eval(h) - eval(-h)) / (2.0 * h);
      double an = grads[li].data[k];
      double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(r, c);
  for (auto& x : m.data) x = rng.uniform(lo, hi);
  return m;
}

}  // namespace mhcl::testutil

#include "mhcl/objective.hpp"

namespace mhcl::testutil {

// Small dense-ish dataset for end-to-end checks: every (user, item) pair gets
// a rating cycling through the category set.
inline RatingDataset tiny_dataset(std::size_t users, std::size_t items,
                                  const std::vector<int>& categories) {
  RatingDataset ds;
  ds.num_users = users;
  ds.num_items = items;
  ds.categories = categories;
  std::size_t k = 0;
  for (std::size_t u = 0; u < users; ++u)
    for (std::size_t v = 0; v < items; ++v) {
      RatingRecord rec{u, v, categories[k++ % categories.size()], 0};
      if ((u * items + v) % 5 == 4)
        ds.val.push_back(rec);
      else if ((u * items + v) % 5 == 3)
        ds.test.push_back(rec);
      else
        ds.train.push_back(rec);
    }
  for (std::size_t u = 0; u < users; ++u) ds.user_raw.push_back(static_cast<std::int64_t>(u));
  for (std::size_t v = 0; v < items; ++v) ds.item_raw.push_back(static_cast<std::int64_t>(v));
  return ds;
}

// Central finite differences of the full training loss through the whole
// encoder + objective, over every parameter entry. Returns worst relative
// error.
inline double fd_check_end_to_end(const RatingDataset& ds, const TrainConfig& cfg,
                                  double h = 1e-6) {
  RatingSubgraphs graphs = build_subgraphs(ds);
  ModelParams params = ModelParams::init(ds.num_users, ds.num_items, ds.categories, cfg);
  CompletionBatch batch = CompletionBatch::from_train(ds, cfg.l_close);

  auto loss_value = [&](const ModelParams& p) {
    Tape tape;
    ForwardPass fwd = build_forward(tape, p, graphs, cfg);
    LossTerms losses = build_completion_loss(tape, fwd, p, batch, cfg);
    return tape.value(losses.total).item();
  };

  Tape tape;
  ForwardPass fwd = build_forward(tape, params, graphs, cfg);
  LossTerms losses = build_completion_loss(tape, fwd, params, batch, cfg);
  tape.backward(losses.total);

  double worst = 0.0;
  auto tensors = params.named_tensors();
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    Matrix* tensor = tensors[ti].second;
    const Matrix& grad = tape.grad(fwd.param_vars[ti]);
    for (std::size_t k = 0; k < tensor->numel(); ++k) {
      double keep = tensor->data[k];
      tensor->data[k] = keep + h;
      double up = loss_value(params);
      tensor->data[k] = keep - h;
      double down = loss_value(params);
      tensor->data[k] = keep;
      double fd = (up - down) / (2.0 * h);
      double an = grad.data[k];
      double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace mhcl::testutil
