#include "mhcl/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "mhcl/optim.hpp"

namespace mhcl {

Matrix balanced_targets(const std::vector<std::size_t>& label_idx, std::size_t num_ratings,
                        double l_close) {
  if (num_ratings == 0) fail("contract", "balanced_targets: empty rating set");
  Matrix t = Matrix::zeros(label_idx.size(), num_ratings);
  for (std::size_t p = 0; p < label_idx.size(); ++p) {
    std::size_t k = label_idx[p];
    if (k >= num_ratings) fail("contract", "balanced_targets: label index out of range");
    t(p, k) = 1.0;
    if (k > 0) t(p, k - 1) = l_close;
    if (k + 1 < num_ratings) t(p, k + 1) = l_close;
    double s = 0.0;
    for (std::size_t r = 0; r < num_ratings; ++r) s += t(p, r);
    for (std::size_t r = 0; r < num_ratings; ++r) t(p, r) /= s;
  }
  return t;
}

CompletionBatch CompletionBatch::from_train(const RatingDataset& ds, double l_close) {
  auto pairs = std::make_shared<std::vector<Pair>>();
  pairs->reserve(ds.train.size());
  std::vector<std::size_t> labels;
  labels.reserve(ds.train.size());
  for (const auto& rec : ds.train) {
    pairs->push_back({rec.user, rec.item});
    labels.push_back(ds.category_index(rec.rating));
  }
  CompletionBatch batch;
  batch.pairs = std::move(pairs);
  batch.targets = balanced_targets(labels, ds.categories.size(), l_close);
  return batch;
}

std::vector<BprTriple> sample_bpr_triples(const RatingDataset& ds, Rng& rng) {
  std::vector<std::unordered_set<std::size_t>> seen(ds.num_users);
  for (const auto& rec : ds.train) seen[rec.user].insert(rec.item);
  std::vector<BprTriple> triples;
  triples.reserve(ds.train.size());
  for (const auto& rec : ds.train) {
    if (seen[rec.user].size() >= ds.num_items) continue;  // user saturates the catalog
    std::size_t neg = 0;
    do {
      neg = rng.below(ds.num_items);
    } while (seen[rec.user].count(neg) != 0);
    triples.push_back({rec.user, rec.item, neg});
  }
  return triples;
}

namespace {

// Deterministic without-replacement subsample of [0, n), sorted ascending.
std::shared_ptr<const std::vector<std::size_t>> sample_indices(std::size_t n, std::size_t cap,
                                                               std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return std::make_shared<const std::vector<std::size_t>>(std::move(idx));
}

// One InfoNCE term on a row range [start, start+count) of the two views,
// optionally capped by subsampling (the same rows on both sides).
Var side_infonce(Tape& tape, Var a, Var b, std::size_t start, std::size_t count,
                 double temperature, std::size_t cap, std::uint64_t seed) {
  Var va, vb;
  if (cap > 0 && count > cap) {
    auto sub = sample_indices(count, cap, seed);
    auto idx = std::make_shared<std::vector<std::size_t>>();
    idx->reserve(cap);
    for (std::size_t i : *sub) idx->push_back(start + i);
    std::shared_ptr<const std::vector<std::size_t>> cidx = idx;
    va = tape.gather_rows(a, cidx);
    vb = tape.gather_rows(b, cidx);
  } else {
    va = tape.slice_rows(a, start, count);
    vb = tape.slice_rows(b, start, count);
  }
  return tape.infonce(tape.l2_normalize_rows(va), tape.l2_normalize_rows(vb), temperature);
}

Var zero_scalar(Tape& tape) { return tape.constant(Matrix::zeros(1, 1)); }

}  // namespace

Var cross_rating_loss(Tape& tape, const std::vector<Var>& x_bar, std::size_t num_users,
                      double tau, std::size_t cl_neg_samples, std::uint64_t seed) {
  if (x_bar.size() < 2) return zero_scalar(tape);
  std::size_t total = tape.value(x_bar[0]).rows;
  std::size_t num_items = total - num_users;
  Var acc = zero_scalar(tape);
  for (std::size_t r = 0; r + 1 < x_bar.size(); ++r) {
    Var u = side_infonce(tape, x_bar[r], x_bar[r + 1], 0, num_users, tau, cl_neg_samples,
                         seed + 2 * r);
    Var v = side_infonce(tape, x_bar[r], x_bar[r + 1], num_users, num_items, tau,
                         cl_neg_samples, seed + 2 * r + 1);
    acc = tape.add(acc, tape.add(u, v));
  }
  return acc;
}

Var global_local_loss(Tape& tape, Var z, Var gamma, std::size_t num_users, double temperature,
                      std::size_t cl_neg_samples, std::uint64_t seed) {
  std::size_t total = tape.value(z).rows;
  std::size_t num_items = total - num_users;
  Var u = side_infonce(tape, z, gamma, 0, num_users, temperature, cl_neg_samples, seed);
  Var v = side_infonce(tape, z, gamma, num_users, num_items, temperature, cl_neg_samples,
                       seed + 1);
  return tape.add(u, v);
}

Var nrr_penalty(Tape& tape, const std::vector<Var>& embed_tables) {
  if (embed_tables.size() < 2) return zero_scalar(tape);
  Var acc = tape.frobenius_sq(tape.sub(embed_tables[0], embed_tables[1]));
  for (std::size_t r = 1; r + 1 < embed_tables.size(); ++r)
    acc = tape.add(acc, tape.frobenius_sq(tape.sub(embed_tables[r], embed_tables[r + 1])));
  return tape.scalar_mul(acc, 1.0 / static_cast<double>(embed_tables.size() - 1));
}

Var balanced_ce_loss(Tape& tape, Var logits, const Matrix& targets) {
  if (!tape.value(logits).same_shape(targets))
    fail("contract", "balanced_ce_loss: logits/targets shape mismatch");
  std::size_t rows = targets.rows;
  if (rows == 0) return zero_scalar(tape);
  Var logp = tape.log_clamped(tape.rowwise_softmax(logits, 1.0));
  Var weighted = tape.mul(logp, tape.constant(targets));
  return tape.scalar_mul(tape.reduce_sum(weighted), -1.0 / static_cast<double>(rows));
}

Var bpr_loss(Tape& tape, Var e, const std::vector<BprTriple>& triples, std::size_t num_users,
             double reg) {
  if (triples.empty()) return zero_scalar(tape);
  auto uidx = std::make_shared<std::vector<std::size_t>>();
  auto pidx = std::make_shared<std::vector<std::size_t>>();
  auto nidx = std::make_shared<std::vector<std::size_t>>();
  for (const auto& t : triples) {
    uidx->push_back(t.user);
    pidx->push_back(num_users + t.pos);
    nidx->push_back(num_users + t.neg);
  }
  Var eu = tape.gather_rows(e, uidx);
  Var ep = tape.gather_rows(e, pidx);
  Var en = tape.gather_rows(e, nidx);
  Var diff = tape.sub(tape.row_dot(eu, ep), tape.row_dot(eu, en));
  Var loss = tape.reduce_sum(tape.softplus(tape.scalar_mul(diff, -1.0)));
  if (reg > 0.0) {
    Var penalty = tape.add(tape.frobenius_sq(eu),
                           tape.add(tape.frobenius_sq(ep), tape.frobenius_sq(en)));
    loss = tape.add(loss, tape.scalar_mul(penalty, reg));
  }
  return tape.scalar_mul(loss, 1.0 / static_cast<double>(triples.size()));
}

namespace {

LossTerms combine(Tape& tape, Var main, Var cross, Var glob, Var nrr, const TrainConfig& cfg) {
  LossTerms out{main, cross, glob, nrr, main};
  Var total = main;
  if (cfg.alpha > 0.0) total = tape.add(total, tape.scalar_mul(cross, cfg.alpha));
  if (cfg.beta > 0.0) total = tape.add(total, tape.scalar_mul(glob, cfg.beta));
  if (cfg.lambda_nrr > 0.0) total = tape.add(total, tape.scalar_mul(nrr, cfg.lambda_nrr));
  out.total = total;
  return out;
}

}  // namespace

LossTerms build_completion_loss(Tape& tape, const ForwardPass& fwd, const ModelParams& params,
                                const CompletionBatch& batch, const TrainConfig& cfg) {
  if (cfg.main_loss == "oce")
    fail("config", "main_loss=oce (ordinal cross-entropy) is not implemented");
  Var logits = tape.bilinear_logits(fwd.e, fwd.decoder, batch.pairs, params.num_users);
  Var main = balanced_ce_loss(tape, logits, batch.targets);
  Var cross = cross_rating_loss(tape, fwd.x_bar, params.num_users, cfg.tau, cfg.cl_neg_samples,
                                cfg.seed);
  Var glob = cfg.use_hypergraph
                 ? global_local_loss(tape, fwd.z, fwd.gamma, params.num_users, cfg.gamma,
                                     cfg.cl_neg_samples, cfg.seed + 101)
                 : tape.constant(Matrix::zeros(1, 1));
  Var nrr = nrr_penalty(tape, fwd.embed);
  return combine(tape, main, cross, glob, nrr, cfg);
}

LossTerms build_recommendation_loss(Tape& tape, const ForwardPass& fwd,
                                    const ModelParams& params,
                                    const std::vector<BprTriple>& triples,
                                    const TrainConfig& cfg) {
  Var main = bpr_loss(tape, fwd.e, triples, params.num_users, cfg.bpr_reg);
  Var cross = cross_rating_loss(tape, fwd.x_bar, params.num_users, cfg.tau, cfg.cl_neg_samples,
                                cfg.seed);
  Var glob = cfg.use_hypergraph
                 ? global_local_loss(tape, fwd.z, fwd.gamma, params.num_users, cfg.gamma,
                                     cfg.cl_neg_samples, cfg.seed + 101)
                 : tape.constant(Matrix::zeros(1, 1));
  Var nrr = nrr_penalty(tape, fwd.embed);
  return combine(tape, main, cross, glob, nrr, cfg);
}

Matrix decode_probs(const Matrix& e, const std::vector<Matrix>& decoder,
                    const std::vector<Pair>& pairs, std::size_t num_users) {
  std::size_t nr = decoder.size();
  if (nr == 0) fail("contract", "decode_probs: no decoder matrices");
  std::size_t d = e.cols;
  std::size_t num_items = e.rows - num_users;
  // Precompute Q_r^T applied to the item block, then per-pair dots.
  std::vector<Matrix> it;
  it.reserve(nr);
  Matrix items(num_items, d);
  std::copy(e.data.begin() + static_cast<std::ptrdiff_t>(num_users * d), e.data.end(),
            items.data.begin());
  for (const Matrix& q : decoder) it.push_back(matmul(items, transpose(q)));

  Matrix probs(pairs.size(), nr);
  parallel_rows(pairs.size(), [&](std::size_t lo, std::size_t hi_row) {
    std::vector<double> logit(nr);
    for (std::size_t p = lo; p < hi_row; ++p) {
      const double* eu = e.row(pairs[p].user);
      double hi = -1e300;
      for (std::size_t r = 0; r < nr; ++r) {
        const double* iv = it[r].row(pairs[p].item);
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += eu[k] * iv[k];
        logit[r] = s;
        hi = std::max(hi, s);
      }
      double z = 0.0;
      for (std::size_t r = 0; r < nr; ++r) {
        logit[r] = std::exp(logit[r] - hi);
        z += logit[r];
      }
      for (std::size_t r = 0; r < nr; ++r) probs(p, r) = logit[r] / z;
    }
  });
  return probs;
}

std::vector<double> expected_ratings(const Matrix& probs, const std::vector<int>& categories) {
  if (probs.cols != categories.size())
    fail("contract", "expected_ratings: category count mismatch");
  std::vector<double> out(probs.rows);
  for (std::size_t p = 0; p < probs.rows; ++p) {
    double s = 0.0;
    for (std::size_t r = 0; r < probs.cols; ++r) s += probs(p, r) * categories[r];
    out[p] = s;
  }
  return out;
}

}  // namespace mhcl
