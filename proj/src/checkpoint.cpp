#include "mhcl/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mhcl {

namespace {

constexpr char kMagic[4] = {'M', 'H', 'C', 'L'};
constexpr std::uint64_t kVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) fail("corruption", "checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

void put_tensor(std::ostream& os, const std::string& name, const Matrix& m) {
  put_u64(os, name.size());
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u64(os, 2);
  put_u64(os, m.rows);
  put_u64(os, m.cols);
  for (double x : m.data) put_f64(os, x);
}

struct NamedTensor {
  std::string name;
  Matrix value{0, 0};
};

NamedTensor get_tensor(std::istream& is) {
  NamedTensor t;
  std::uint64_t nlen = get_u64(is);
  if (nlen > 4096) fail("corruption", "checkpoint tensor name too long");
  t.name.resize(nlen);
  is.read(t.name.data(), static_cast<std::streamsize>(nlen));
  if (!is) fail("corruption", "checkpoint truncated");
  std::uint64_t rank = get_u64(is);
  if (rank != 2) fail("format", "unsupported tensor rank in checkpoint");
  std::uint64_t rows = get_u64(is);
  std::uint64_t cols = get_u64(is);
  if (rows * cols > (1ull << 32)) fail("corruption", "checkpoint tensor implausibly large");
  t.value = Matrix(rows, cols);
  for (double& x : t.value.data) x = get_f64(is);
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail("io", "cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  put_u64(os, kVersion);
  std::string cfg = ckpt.config.to_text();
  put_u64(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  put_f64(os, ckpt.best_metric);
  put_u64(os, ckpt.num_users);
  put_u64(os, ckpt.num_items);

  auto tensors = ckpt.params.named_tensors();
  Matrix cats(1, ckpt.params.categories.size());
  for (std::size_t i = 0; i < cats.cols; ++i) cats(0, i) = ckpt.params.categories[i];

  bool with_adam = !ckpt.adam.m.empty();
  bool with_embed = !ckpt.embeddings.empty();
  std::uint64_t count = tensors.size() + 1;  // + meta.categories
  if (with_adam) count += 2 * ckpt.adam.m.size() + 1;
  if (with_embed) count += 3;
  put_u64(os, count);

  put_tensor(os, "meta.categories", cats);
  if (with_embed) {
    put_tensor(os, "meta.embeddings", ckpt.embeddings);
    Matrix ur(1, ckpt.user_raw.size()), ir(1, ckpt.item_raw.size());
    for (std::size_t i = 0; i < ur.cols; ++i) ur(0, i) = static_cast<double>(ckpt.user_raw[i]);
    for (std::size_t i = 0; i < ir.cols; ++i) ir(0, i) = static_cast<double>(ckpt.item_raw[i]);
    put_tensor(os, "meta.user_raw", ur);
    put_tensor(os, "meta.item_raw", ir);
  }
  for (const auto& [name, m] : tensors) put_tensor(os, name, *m);
  if (with_adam) {
    Matrix step(1, 1);
    step(0, 0) = static_cast<double>(ckpt.adam.step);
    put_tensor(os, "adam.step", step);
    for (std::size_t i = 0; i < ckpt.adam.m.size(); ++i) {
      put_tensor(os, "adam.m." + tensors[i].first, ckpt.adam.m[i]);
      put_tensor(os, "adam.v." + tensors[i].first, ckpt.adam.v[i]);
    }
  }
  os.flush();
  if (!os) fail("io", "failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("io", "cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    fail("format", "not a model checkpoint (bad magic): " + path);
  std::uint64_t version = get_u64(is);
  if (version != kVersion) fail("format", "unsupported checkpoint version");

  Checkpoint ckpt;
  std::uint64_t cfg_len = get_u64(is);
  if (cfg_len > (1ull << 20)) fail("corruption", "checkpoint config block too large");
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  if (!is) fail("corruption", "checkpoint truncated");
  ckpt.config = TrainConfig::from_text(cfg_text);
  ckpt.best_metric = get_f64(is);
  ckpt.num_users = get_u64(is);
  ckpt.num_items = get_u64(is);

  std::uint64_t count = get_u64(is);
  std::vector<NamedTensor> loaded;
  loaded.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) loaded.push_back(get_tensor(is));

  auto find = [&](const std::string& name) -> const NamedTensor* {
    for (const auto& t : loaded)
      if (t.name == name) return &t;
    return nullptr;
  };

  const NamedTensor* cats = find("meta.categories");
  if (!cats) fail("format", "checkpoint missing tensor meta.categories");
  std::vector<int> categories;
  for (double x : cats->value.data) categories.push_back(static_cast<int>(x));

  ckpt.params = ModelParams::init(ckpt.num_users, ckpt.num_items, categories, ckpt.config);
  auto tensors = ckpt.params.named_tensors();
  for (auto& [name, dst] : tensors) {
    const NamedTensor* src = find(name);
    if (!src) fail("format", "checkpoint missing tensor " + name);
    if (src->value.rows != dst->rows || src->value.cols != dst->cols)
      fail("format", "checkpoint shape mismatch for tensor " + name);
    *dst = src->value;
  }

  if (const NamedTensor* emb = find("meta.embeddings")) {
    ckpt.embeddings = emb->value;
    const NamedTensor* ur = find("meta.user_raw");
    const NamedTensor* ir = find("meta.item_raw");
    if (!ur || !ir) fail("format", "checkpoint missing tensor meta.user_raw");
    for (double x : ur->value.data) ckpt.user_raw.push_back(static_cast<std::int64_t>(x));
    for (double x : ir->value.data) ckpt.item_raw.push_back(static_cast<std::int64_t>(x));
  }

  ckpt.adam.lr = ckpt.config.lr;
  if (const NamedTensor* step = find("adam.step")) {
    ckpt.adam.step = static_cast<std::uint64_t>(step->value(0, 0));
    for (const auto& [name, dst] : tensors) {
      const NamedTensor* m = find("adam.m." + name);
      const NamedTensor* v = find("adam.v." + name);
      if (!m || !v) fail("format", "checkpoint missing optimizer state for tensor " + name);
      if (!m->value.same_shape(*dst) || !v->value.same_shape(*dst))
        fail("format", "checkpoint shape mismatch for tensor adam.m." + name);
      ckpt.adam.m.push_back(m->value);
      ckpt.adam.v.push_back(v->value);
    }
  }
  return ckpt;
}

}  // namespace mhcl
