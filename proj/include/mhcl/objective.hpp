#pragma once

#include "mhcl/dataset.hpp"
#include "mhcl/model.hpp"

namespace mhcl {

/// Soft decoder targets: 1 at the true rating, l_close at adjacent ratings,
/// renormalized so each row sums to 1. l_close = 0 recovers one-hot CE.
Matrix balanced_targets(const std::vector<std::size_t>& label_idx, std::size_t num_ratings,
                        double l_close);

/// Observed train pairs plus their soft targets.
struct CompletionBatch {
  std::shared_ptr<const std::vector<Pair>> pairs;
  Matrix targets;  // |pairs| x |R|
  static CompletionBatch from_train(const RatingDataset& ds, double l_close);
};

struct BprTriple {
  std::size_t user, pos, neg;  // item indices are item-local
};

/// One triple per observed train edge; negatives drawn uniformly from the
/// user's unseen items.
std::vector<BprTriple> sample_bpr_triples(const RatingDataset& ds, Rng& rng);

struct LossTerms {
  Var main, cross_rating, global_local, nrr, total;
};

/// Sum over adjacent rating pairs and both sides of the mean-anchor InfoNCE
/// (Likert-adjacent channels as positive pairs). `cl_neg_samples` > 0 caps
/// each side by deterministic uniform subsampling.
Var cross_rating_loss(Tape& tape, const std::vector<Var>& x_bar, std::size_t num_users,
                      double tau, std::size_t cl_neg_samples, std::uint64_t seed);

Var global_local_loss(Tape& tape, Var z, Var gamma, std::size_t num_users, double temperature,
                      std::size_t cl_neg_samples, std::uint64_t seed);

/// Mean squared adjacent-table distance over the per-rating embedding tables.
Var nrr_penalty(Tape& tape, const std::vector<Var>& embed_tables);

/// Mean soft-target cross-entropy over observed pairs.
Var balanced_ce_loss(Tape& tape, Var logits, const Matrix& targets);

/// Mean -log sigmoid(score+ - score-) plus reg * mean involved-embedding L2.
Var bpr_loss(Tape& tape, Var e, const std::vector<BprTriple>& triples, std::size_t num_users,
             double reg);

LossTerms build_completion_loss(Tape& tape, const ForwardPass& fwd, const ModelParams& params,
                                const CompletionBatch& batch, const TrainConfig& cfg);

LossTerms build_recommendation_loss(Tape& tape, const ForwardPass& fwd,
                                    const ModelParams& params,
                                    const std::vector<BprTriple>& triples,
                                    const TrainConfig& cfg);

// --- forward-only decoding (no tape) ---------------------------------------

/// Softmax over per-rating bilinear logits for each query pair.
Matrix decode_probs(const Matrix& e, const std::vector<Matrix>& decoder,
                    const std::vector<Pair>& pairs, std::size_t num_users);

/// Probability-weighted mean rating per row of `probs`.
std::vector<double> expected_ratings(const Matrix& probs, const std::vector<int>& categories);

}  // namespace mhcl
