#pragma once

#include <string>

#include "mhcl/config.hpp"
#include "mhcl/model.hpp"
#include "mhcl/optim.hpp"

namespace mhcl {

struct Checkpoint {
  TrainConfig config;
  double best_metric = 0.0;
  std::size_t num_users = 0, num_items = 0;
  ModelParams params;
  AdamState adam;  // optional; empty moment buffers when absent

  // Inference extras so `predict` needs no dataset: final embeddings plus
  // the dense-id -> raw-id maps. Optional; empty when absent.
  Matrix embeddings{0, 0};
  std::vector<std::int64_t> user_raw, item_raw;
};

// Binary layout, all little-endian: magic "MHCL", u64 version, u64 config
// text length + bytes, f64 best metric, u64 num_users, u64 num_items, u64
// tensor count, then named tensors, each as u64 name length + UTF-8 name +
// u64 rank + u64 dims + f64 payload. Adam state is stored under reserved
// names ("adam.*"); rating categories under "meta.categories".
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mhcl
