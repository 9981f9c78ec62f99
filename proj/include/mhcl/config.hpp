#pragma once

#include <cstdint>
#include <string>

namespace mhcl {

/// Run configuration. File form is flat key=value text with exactly these
/// field names; unknown keys are errors.
struct TrainConfig {
  std::size_t d = 30;     // per-slot embedding width; model width is 3d
  std::size_t L = 3;      // propagation layers
  std::size_t K = 256;    // hyperedges
  double theta = 0.5;     // layer-combination decay
  double lr = 5e-3;
  double weight_decay = 0.0;  // decoupled Adam weight decay
  double lr_decay = 0.99;      // multiplicative per-epoch learning-rate decay
  double dropout = 0.7;         // train-only node dropout on layer-0 embeddings
  double dropout_decode = 0.3;  // train-only elementwise dropout on the decoder input
  double alpha = 0.01;       // cross-rating contrastive weight
  double beta = 0.01;        // global-local contrastive weight
  double lambda_nrr = 0.01;  // adjacent-table regularizer weight
  double tau = 0.2;          // cross-rating InfoNCE temperature
  double gamma = 0.2;        // global-local InfoNCE temperature
  double l_close = 0.2;      // soft-label mass for adjacent ratings
  std::size_t max_epochs = 350;
  std::size_t patience = 40;
  std::uint64_t seed = 1;
  std::size_t cl_neg_samples = 0;  // 0 = full batch
  std::string task = "completion";  // completion | recommendation
  bool use_hypergraph = true;       // false disables the global path entirely
  std::string main_loss = "bce";    // bce | oce (oce is a recognized stub)
  double bpr_reg = 1e-4;            // L2 weight for the recommendation loss
  double leaky_slope = 0.2;

  void validate() const;
  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  static TrainConfig from_file(const std::string& path);
};

}  // namespace mhcl
