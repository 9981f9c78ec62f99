#pragma once

#include <functional>
#include <string>

#include "mhcl/checkpoint.hpp"
#include "mhcl/metrics.hpp"
#include "mhcl/objective.hpp"

namespace mhcl {

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0, main = 0.0, cross = 0.0, global = 0.0, nrr = 0.0;
  double val_metric = 0.0;  // val MSE (completion) or val NDCG@10 (recommendation)
  bool improved = false;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

/// Full-batch training with early stopping on the validation metric. The
/// callback (optional) sees each epoch's log line as it is produced. Aborts
/// with a diagnostic naming the first non-finite loss term on divergence.
TrainResult train(const RatingDataset& ds, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = nullptr);

/// Forward pass without a tape: returns the final embeddings for a trained
/// parameter set (used by eval / predict paths).
Matrix final_embeddings(const ModelParams& params, const RatingSubgraphs& graphs,
                        const TrainConfig& cfg);

}  // namespace mhcl
