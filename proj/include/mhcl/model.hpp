#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mhcl/config.hpp"
#include "mhcl/dataset.hpp"
#include "mhcl/optim.hpp"
#include "mhcl/tape.hpp"

namespace mhcl {

/// All trainable tensors. Model width d_model = 3d comes from concatenating
/// the identical / role / one-hot embedding slots.
struct ModelParams {
  std::size_t num_users = 0, num_items = 0, d = 0, hyperedges = 0;
  std::vector<int> categories;

  std::vector<Matrix> embed;                      // per rating: (M+N+3) x d
  std::vector<Matrix> hyper_wu, hyper_wv;         // per rating: d_model x K
  std::vector<Matrix> attn_local, attn_global;    // per rating: d_model x 1
  Matrix fuse_local_u, fuse_local_v;              // d_model x d_model
  Matrix fuse_global_u, fuse_global_v;
  std::vector<Matrix> decoder;                    // per rating: d_model x d_model

  std::size_t d_model() const { return 3 * d; }
  std::size_t num_ratings() const { return categories.size(); }

  static ModelParams init(std::size_t num_users, std::size_t num_items,
                          const std::vector<int>& categories, const TrainConfig& cfg);

  /// Stable name -> tensor listing; ordering defines gradient/Adam alignment
  /// and the checkpoint layout.
  std::vector<std::pair<std::string, Matrix*>> named_tensors();
  std::vector<std::pair<std::string, const Matrix*>> named_tensors() const;
};

/// Tape handles for one forward pass.
struct ForwardPass {
  std::vector<Var> param_vars;  // aligned with ModelParams::named_tensors()
  std::vector<Var> embed, hyper_wu, hyper_wv, attn_local, attn_global, decoder;
  Var fuse_local_u, fuse_local_v, fuse_global_u, fuse_global_v;

  std::vector<Var> x0;      // per rating, layer-0 embeddings (M+N) x d_model
  std::vector<Var> x_bar;   // per rating, layer-combined local embeddings
  std::vector<Var> h_glob;  // per rating, hypergraph global embeddings
  Var z;       // fused local (M+N) x d_model
  Var gamma;   // fused global; invalid when the hypergraph path is disabled
  Var e;       // final representation, z + gamma
};

/// Pushes parameters as leaves and builds the whole encoder graph
/// (propagation, hypergraph convolution, attention fusion). `node_masks`,
/// when present, row-scales each rating's layer-0 embeddings (inverted node
/// dropout during training); one 1 x (M+N) mask per rating. `e_mask`, when
/// present, elementwise-scales the final representation (decoder-input
/// dropout).
ForwardPass build_forward(Tape& tape, const ModelParams& params,
                          const RatingSubgraphs& graphs, const TrainConfig& cfg,
                          const std::vector<Matrix>* node_masks = nullptr,
                          const Matrix* e_mask = nullptr);

// Exposed separately for direct testing.
Var build_initial_embeddings(Tape& tape, Var embed_table, std::size_t num_users,
                             std::size_t num_items);
Var propagate(Tape& tape, Var x0, const std::shared_ptr<SparseMatrix>& adjacency,
              std::size_t layers, double theta);
Var learn_hypergraph(Tape& tape, Var x, Var w, double leaky_slope);
Var hyper_conv(Tape& tape, Var membership, Var x);
std::vector<Var> cross_rating_attend(Tape& tape, const std::vector<Var>& x,
                                     const std::vector<Var>& attn, double leaky_slope);
Var fuse_views(Tape& tape, const std::vector<Var>& per_rating, Var w_users, Var w_items,
               std::size_t num_users);

}  // namespace mhcl
