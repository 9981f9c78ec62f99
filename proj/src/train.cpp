#include "mhcl/train.hpp"

#include <cmath>

namespace mhcl {

Matrix final_embeddings(const ModelParams& params, const RatingSubgraphs& graphs,
                        const TrainConfig& cfg) {
  Tape tape;
  ForwardPass fwd = build_forward(tape, params, graphs, cfg);
  return tape.value(fwd.e);
}

namespace {

void check_finite(double v, const char* term, std::size_t epoch) {
  if (!std::isfinite(v))
    fail("divergence", std::string("non-finite ") + term + " loss term at epoch " +
                           std::to_string(epoch));
}

}  // namespace

TrainResult train(const RatingDataset& ds, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (ds.train.empty()) fail("contract", "train: empty train split");
  bool completion = cfg.task == "completion";
  RatingSubgraphs graphs = build_subgraphs(ds);

  ModelParams params = ModelParams::init(ds.num_users, ds.num_items, ds.categories, cfg);
  AdamState adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;

  CompletionBatch batch;
  if (completion) batch = CompletionBatch::from_train(ds, cfg.l_close);
  if (ds.val.empty()) fail("contract", "train: empty validation split");

  TrainResult result;
  double best = completion ? 1e300 : -1e300;
  std::size_t since_improved = 0;

  const std::size_t nodes = ds.num_users + ds.num_items;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.lr_decay < 1.0)
      adam.lr = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch - 1));
    Tape tape;
    std::vector<Matrix> masks;
    if (cfg.dropout > 0.0) {
      Rng drop_rng(cfg.seed + 60013 * epoch + 17);
      const double keep = 1.0 - cfg.dropout;
      for (std::size_t r = 0; r < ds.categories.size(); ++r) {
        Matrix mask(1, nodes);
        for (std::size_t i = 0; i < nodes; ++i)
          mask.data[i] = drop_rng.uniform() < keep ? 1.0 / keep : 0.0;
        masks.push_back(std::move(mask));
      }
    }
    Matrix e_mask;
    if (cfg.dropout_decode > 0.0) {
      Rng drop_rng(cfg.seed + 91199 * epoch + 29);
      const double keep = 1.0 - cfg.dropout_decode;
      e_mask = Matrix(nodes, 3 * cfg.d);
      for (auto& v : e_mask.data) v = drop_rng.uniform() < keep ? 1.0 / keep : 0.0;
    }
    ForwardPass fwd = build_forward(tape, params, graphs, cfg, masks.empty() ? nullptr : &masks,
                                    e_mask.numel() ? &e_mask : nullptr);
    LossTerms losses;
    if (completion) {
      losses = build_completion_loss(tape, fwd, params, batch, cfg);
    } else {
      Rng neg_rng(cfg.seed + 7919 * epoch);
      auto triples = sample_bpr_triples(ds, neg_rng);
      losses = build_recommendation_loss(tape, fwd, params, triples, cfg);
    }

    EpochLog log;
    log.epoch = epoch;
    log.main = tape.value(losses.main).item();
    log.cross = tape.value(losses.cross_rating).item();
    log.global = tape.value(losses.global_local).item();
    log.nrr = tape.value(losses.nrr).item();
    log.loss = tape.value(losses.total).item();
    check_finite(log.main, "main", epoch);
    check_finite(log.cross, "cross-rating contrastive", epoch);
    check_finite(log.global, "global-local contrastive", epoch);
    check_finite(log.nrr, "rating-distance penalty", epoch);
    check_finite(log.loss, "total", epoch);

    tape.backward(losses.total);
    auto tensors = params.named_tensors();
    std::vector<Matrix*> ps;
    std::vector<const Matrix*> gs;
    ps.reserve(tensors.size());
    gs.reserve(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      ps.push_back(tensors[i].second);
      gs.push_back(&tape.grad(fwd.param_vars[i]));
    }
    adam_step(ps, gs, adam);

    Matrix e = final_embeddings(params, graphs, cfg);
    double metric;
    if (completion) {
      metric = evaluate_completion(e, params.decoder, ds.val, ds.categories, ds.num_users).mse;
    } else {
      metric = evaluate_recommendation(e, ds.train, ds.val, ds.num_users, ds.num_items)
                   .ndcg_at_10;
    }
    log.val_metric = metric;
    bool improved = completion ? metric < best : metric > best;
    log.improved = improved;
    if (improved) {
      best = metric;
      since_improved = 0;
      result.best.config = cfg;
      result.best.best_metric = metric;
      result.best.num_users = ds.num_users;
      result.best.num_items = ds.num_items;
      result.best.params = params;
      result.best.adam = adam;
      result.best.embeddings = e;
      result.best.user_raw = ds.user_raw;
      result.best.item_raw = ds.item_raw;
      result.best_epoch = epoch;
    } else {
      ++since_improved;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (since_improved >= cfg.patience) break;
  }
  return result;
}

}  // namespace mhcl
