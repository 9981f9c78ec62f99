#include "mhcl/model.hpp"

namespace mhcl {

ModelParams ModelParams::init(std::size_t num_users, std::size_t num_items,
                              const std::vector<int>& categories, const TrainConfig& cfg) {
  ModelParams p;
  p.num_users = num_users;
  p.num_items = num_items;
  p.d = cfg.d;
  p.hyperedges = cfg.K;
  p.categories = categories;
  const std::size_t slots = num_users + num_items + 3;
  const std::size_t dm = p.d_model();
  Rng rng(cfg.seed);
  for (std::size_t r = 0; r < categories.size(); ++r)
    p.embed.push_back(xavier_init(slots, cfg.d, rng));
  for (std::size_t r = 0; r < categories.size(); ++r) {
    p.hyper_wu.push_back(xavier_init(dm, cfg.K, rng));
    p.hyper_wv.push_back(xavier_init(dm, cfg.K, rng));
  }
  for (std::size_t r = 0; r < categories.size(); ++r) {
    p.attn_local.push_back(xavier_init(dm, 1, rng));
    p.attn_global.push_back(xavier_init(dm, 1, rng));
  }
  p.fuse_local_u = xavier_init(dm, dm, rng);
  p.fuse_local_v = xavier_init(dm, dm, rng);
  p.fuse_global_u = xavier_init(dm, dm, rng);
  p.fuse_global_v = xavier_init(dm, dm, rng);
  for (std::size_t r = 0; r < categories.size(); ++r)
    p.decoder.push_back(xavier_init(dm, dm, rng));
  return p;
}

namespace {
template <typename Params, typename M>
std::vector<std::pair<std::string, M*>> list_tensors(Params& p) {
  std::vector<std::pair<std::string, M*>> out;
  auto add = [&](const std::string& name, M& m) { out.emplace_back(name, &m); };
  for (std::size_t r = 0; r < p.embed.size(); ++r)
    add("embed." + std::to_string(r), p.embed[r]);
  for (std::size_t r = 0; r < p.hyper_wu.size(); ++r) {
    add("hyper_wu." + std::to_string(r), p.hyper_wu[r]);
    add("hyper_wv." + std::to_string(r), p.hyper_wv[r]);
  }
  for (std::size_t r = 0; r < p.attn_local.size(); ++r) {
    add("attn_local." + std::to_string(r), p.attn_local[r]);
    add("attn_global." + std::to_string(r), p.attn_global[r]);
  }
  add("fuse_local_u", p.fuse_local_u);
  add("fuse_local_v", p.fuse_local_v);
  add("fuse_global_u", p.fuse_global_u);
  add("fuse_global_v", p.fuse_global_v);
  for (std::size_t r = 0; r < p.decoder.size(); ++r)
    add("decoder." + std::to_string(r), p.decoder[r]);
  return out;
}
}  // namespace

std::vector<std::pair<std::string, Matrix*>> ModelParams::named_tensors() {
  return list_tensors<ModelParams, Matrix>(*this);
}
std::vector<std::pair<std::string, const Matrix*>> ModelParams::named_tensors() const {
  return list_tensors<const ModelParams, const Matrix>(*this);
}

Var build_initial_embeddings(Tape& tape, Var embed_table, std::size_t num_users,
                             std::size_t num_items) {
  const std::size_t n = num_users + num_items;
  auto idx_id = std::make_shared<std::vector<std::size_t>>(n, 0);
  auto idx_role = std::make_shared<std::vector<std::size_t>>(n);
  auto idx_oh = std::make_shared<std::vector<std::size_t>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    (*idx_role)[i] = i < num_users ? 1 : 2;
    (*idx_oh)[i] = 3 + i;
  }
  return tape.concat_cols({tape.gather_rows(embed_table, idx_id),
                           tape.gather_rows(embed_table, idx_role),
                           tape.gather_rows(embed_table, idx_oh)});
}

Var propagate(Tape& tape, Var x0, const std::shared_ptr<SparseMatrix>& adjacency,
              std::size_t layers, double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) fail("contract", "theta must be in (0,1]");
  // Combined output is the theta-geometric average of layer snapshots.
  double norm = 0.0, w = 1.0;
  for (std::size_t l = 0; l <= layers; ++l, w *= theta) norm += w;
  Var x = x0;
  Var acc = tape.scalar_mul(x0, 1.0 / norm);
  w = theta;
  for (std::size_t l = 1; l <= layers; ++l, w *= theta) {
    x = tape.spmm(adjacency, x, /*symmetric=*/true);
    acc = tape.add(acc, tape.scalar_mul(x, w / norm));
  }
  return acc;
}

Var learn_hypergraph(Tape& tape, Var x, Var w, double leaky_slope) {
  // Row-wise softmax keeps memberships strictly positive, so hyperedge
  // degrees never vanish.
  return tape.rowwise_softmax(tape.leaky_relu(tape.matmul(x, w), leaky_slope), 1.0);
}

Var hyper_conv(Tape& tape, Var membership, Var x) {
  Var edge_feat = tape.matmul(tape.transpose(membership), x);       // K x d
  Var inv_deg = tape.recip(tape.col_sum(membership), 1e-12);        // 1 x K
  return tape.matmul(membership, tape.row_scale(edge_feat, inv_deg));
}

std::vector<Var> cross_rating_attend(Tape& tape, const std::vector<Var>& x,
                                     const std::vector<Var>& attn, double leaky_slope) {
  const std::size_t nr = x.size();
  if (attn.size() != nr) fail("shape", "one attention vector per rating expected");
  std::vector<Var> out;
  out.reserve(nr);
  for (std::size_t r = 0; r < nr; ++r) {
    std::vector<std::size_t> nb;
    if (r > 0) nb.push_back(r - 1);
    if (r + 1 < nr) nb.push_back(r + 1);
    Var z = x[r];
    if (nb.size() == 1) {
      // Softmax over a singleton is 1.
      z = tape.add(z, x[nb[0]]);
    } else if (nb.size() == 2) {
      Var l0 = tape.leaky_relu(tape.matmul(x[nb[0]], attn[r]), leaky_slope);
      Var l1 = tape.leaky_relu(tape.matmul(x[nb[1]], attn[r]), leaky_slope);
      Var lam = tape.rowwise_softmax(tape.concat_cols({l0, l1}), 1.0);
      z = tape.add(z, tape.row_scale(x[nb[0]], tape.slice_cols(lam, 0, 1)));
      z = tape.add(z, tape.row_scale(x[nb[1]], tape.slice_cols(lam, 1, 1)));
    }
    out.push_back(z);
  }
  return out;
}

Var fuse_views(Tape& tape, const std::vector<Var>& per_rating, Var w_users, Var w_items,
               std::size_t num_users) {
  if (per_rating.empty()) fail("contract", "fuse_views needs at least one rating");
  Var sum = per_rating[0];
  for (std::size_t r = 1; r < per_rating.size(); ++r) sum = tape.add(sum, per_rating[r]);
  const std::size_t num_items = tape.value(sum).rows - num_users;
  Var users = tape.tanh(tape.matmul(tape.slice_rows(sum, 0, num_users), w_users));
  Var items = tape.tanh(tape.matmul(tape.slice_rows(sum, num_users, num_items), w_items));
  return tape.concat_rows({users, items});
}

ForwardPass build_forward(Tape& tape, const ModelParams& params,
                          const RatingSubgraphs& graphs, const TrainConfig& cfg,
                          const std::vector<Matrix>* node_masks, const Matrix* e_mask) {
  const std::size_t nr = params.num_ratings();
  if (graphs.adjacency.size() != nr)
    fail("shape", "subgraph count does not match rating categories");
  if (node_masks && node_masks->size() != nr)
    fail("shape", "one dropout mask per rating expected");

  ForwardPass f;
  auto tensors = const_cast<ModelParams&>(params).named_tensors();
  for (auto& [name, m] : tensors) f.param_vars.push_back(tape.leaf(*m));
  // Recover structured handles in the same order list_tensors emits them.
  std::size_t k = 0;
  for (std::size_t r = 0; r < nr; ++r) f.embed.push_back(f.param_vars[k++]);
  for (std::size_t r = 0; r < nr; ++r) {
    f.hyper_wu.push_back(f.param_vars[k++]);
    f.hyper_wv.push_back(f.param_vars[k++]);
  }
  for (std::size_t r = 0; r < nr; ++r) {
    f.attn_local.push_back(f.param_vars[k++]);
    f.attn_global.push_back(f.param_vars[k++]);
  }
  f.fuse_local_u = f.param_vars[k++];
  f.fuse_local_v = f.param_vars[k++];
  f.fuse_global_u = f.param_vars[k++];
  f.fuse_global_v = f.param_vars[k++];
  for (std::size_t r = 0; r < nr; ++r) f.decoder.push_back(f.param_vars[k++]);

  const std::size_t m = params.num_users, n = params.num_items;
  for (std::size_t r = 0; r < nr; ++r) {
    Var x0 = build_initial_embeddings(tape, f.embed[r], m, n);
    if (node_masks) x0 = tape.row_scale(x0, tape.leaf((*node_masks)[r]));
    f.x0.push_back(x0);
    f.x_bar.push_back(propagate(tape, x0, graphs.adjacency[r], cfg.L, cfg.theta));
  }

  if (cfg.use_hypergraph) {
    for (std::size_t r = 0; r < nr; ++r) {
      Var xu = tape.slice_rows(f.x_bar[r], 0, m);
      Var xv = tape.slice_rows(f.x_bar[r], m, n);
      Var hu = hyper_conv(tape, learn_hypergraph(tape, xu, f.hyper_wu[r], cfg.leaky_slope), xu);
      Var hv = hyper_conv(tape, learn_hypergraph(tape, xv, f.hyper_wv[r], cfg.leaky_slope), xv);
      f.h_glob.push_back(tape.concat_rows({hu, hv}));
    }
  }

  auto z_per_rating = cross_rating_attend(tape, f.x_bar, f.attn_local, cfg.leaky_slope);
  f.z = fuse_views(tape, z_per_rating, f.fuse_local_u, f.fuse_local_v, m);
  if (cfg.use_hypergraph) {
    auto g_per_rating = cross_rating_attend(tape, f.h_glob, f.attn_global, cfg.leaky_slope);
    f.gamma = fuse_views(tape, g_per_rating, f.fuse_global_u, f.fuse_global_v, m);
    f.e = tape.add(f.z, f.gamma);
  } else {
    f.e = f.z;
  }
  if (e_mask) f.e = tape.mul(f.e, tape.leaf(*e_mask));
  return f;
}

}  // namespace mhcl
