#include "mhcl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "mhcl/optim.hpp"

namespace mhcl {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Schema Schema::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open schema file " + path);
  Schema s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail("parse", "schema line " + std::to_string(lineno) + " is not key=value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key == "columns") {
      s.columns.clear();
      for (const auto& c : split_line(val, ',')) s.columns.push_back(trim(c));
    } else if (key == "delimiter") {
      if (val == "tab" || val == "\\t")
        s.delimiter = '\t';
      else if (val.size() == 1)
        s.delimiter = val[0];
      else
        fail("parse", "schema delimiter must be 'tab' or a single character");
    } else if (key == "scale_min") {
      s.scale_min = std::stoi(val);
    } else if (key == "scale_max") {
      s.scale_max = std::stoi(val);
    } else {
      fail("parse", "unknown schema key '" + key + "'");
    }
  }
  if (s.scale_min >= s.scale_max) fail("parse", "schema scale_min must be < scale_max");
  return s;
}

Ingest load_tsv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open rating file " + path);

  int ucol = -1, icol = -1, rcol = -1, tcol = -1;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const std::string& name = schema.columns[c];
    if (name == "user")
      ucol = static_cast<int>(c);
    else if (name == "item")
      icol = static_cast<int>(c);
    else if (name == "rating")
      rcol = static_cast<int>(c);
    else if (name == "timestamp")
      tcol = static_cast<int>(c);
    else if (name != "ignore")
      fail("parse", "unknown schema column '" + name + "'");
  }
  if (ucol < 0 || icol < 0 || rcol < 0)
    fail("parse", "schema must declare user, item and rating columns");

  Ingest out;
  out.scale_min = schema.scale_min;
  out.scale_max = schema.scale_max;
  std::unordered_map<std::int64_t, std::size_t> umap, imap;
  std::unordered_map<std::uint64_t, std::size_t> last_pos;  // (u,i) -> record index
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line, schema.delimiter);
    if (fields.size() < schema.columns.size())
      fail("parse", "line " + std::to_string(lineno) + ": expected " +
                        std::to_string(schema.columns.size()) + " fields");
    RatingRecord rec;
    try {
      std::int64_t uraw = std::stoll(fields[ucol]);
      std::int64_t iraw = std::stoll(fields[icol]);
      rec.rating = std::stoi(fields[rcol]);
      if (tcol >= 0) rec.timestamp = std::stoll(fields[tcol]);
      auto ui = umap.find(uraw);
      if (ui == umap.end()) {
        ui = umap.emplace(uraw, out.user_raw.size()).first;
        out.user_raw.push_back(uraw);
      }
      rec.user = ui->second;
      auto ii = imap.find(iraw);
      if (ii == imap.end()) {
        ii = imap.emplace(iraw, out.item_raw.size()).first;
        out.item_raw.push_back(iraw);
      }
      rec.item = ii->second;
    } catch (const std::exception&) {
      fail("parse", "line " + std::to_string(lineno) + ": malformed field");
    }
    if (rec.rating < schema.scale_min || rec.rating > schema.scale_max)
      fail("validation", "line " + std::to_string(lineno) + ": rating " +
                             std::to_string(rec.rating) + " outside declared scale");
    const std::uint64_t key =
        (static_cast<std::uint64_t>(rec.user) << 32) | static_cast<std::uint64_t>(rec.item);
    auto it = last_pos.find(key);
    if (it != last_pos.end()) {
      out.records[it->second] = rec;  // keep last occurrence
      ++out.duplicate_count;
    } else {
      last_pos.emplace(key, out.records.size());
      out.records.push_back(rec);
    }
  }
  return out;
}

int bucket_of(int rating, int scale_max, int target_buckets) {
  // ceil(r / (scale_max / target)) keeps the max rating in the top bucket.
  const double step = static_cast<double>(scale_max) / target_buckets;
  return static_cast<int>(std::ceil(static_cast<double>(rating) / step));
}

void bucket_scale(Ingest& ingest, int target_buckets) {
  if (ingest.scale_max - ingest.scale_min + 1 <= target_buckets)
    fail("contract", "bucket_scale requires a scale wider than the target");
  for (auto& rec : ingest.records)
    rec.rating = bucket_of(rec.rating, ingest.scale_max, target_buckets);
  ingest.scale_min = bucket_of(ingest.scale_min, ingest.scale_max, target_buckets);
  ingest.scale_max = target_buckets;
}

std::size_t RatingDataset::category_index(int rating) const {
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == rating) return i;
  fail("contract", "rating " + std::to_string(rating) + " not in category set");
}

RatingDataset split(const Ingest& ingest, std::uint64_t seed, const std::vector<double>& ratios) {
  if (ratios.size() != 3) fail("contract", "split expects three ratios");
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::fabs(sum - 1.0) > 1e-9) fail("contract", "split ratios must sum to 1");
  if (ingest.records.size() < 10) fail("contract", "need at least 10 records to split");

  std::vector<std::size_t> order(ingest.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n = order.size();
  const std::size_t n_train = static_cast<std::size_t>(std::llround(ratios[0] * n));
  const std::size_t n_val = static_cast<std::size_t>(std::llround(ratios[1] * n));

  RatingDataset ds;
  ds.num_users = ingest.user_raw.size();
  ds.num_items = ingest.item_raw.size();
  ds.user_raw = ingest.user_raw;
  ds.item_raw = ingest.item_raw;
  for (int r = ingest.scale_min; r <= ingest.scale_max; ++r) ds.categories.push_back(r);
  for (std::size_t i = 0; i < n; ++i) {
    const RatingRecord& rec = ingest.records[order[i]];
    if (i < n_train)
      ds.train.push_back(rec);
    else if (i < n_train + n_val)
      ds.val.push_back(rec);
    else
      ds.test.push_back(rec);
  }
  return ds;
}

RatingSubgraphs build_subgraphs(const RatingDataset& dataset) {
  if (dataset.train.empty()) fail("contract", "build_subgraphs needs a nonempty train split");
  const std::size_t n_nodes = dataset.num_users + dataset.num_items;
  const std::size_t nr = dataset.categories.size();
  RatingSubgraphs out;
  out.degrees.assign(nr, std::vector<std::size_t>(n_nodes, 0));
  out.edge_counts.assign(nr, 0);

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges(nr);
  for (const auto& rec : dataset.train) {
    const std::size_t r = dataset.category_index(rec.rating);
    edges[r].emplace_back(rec.user, dataset.num_users + rec.item);
    out.degrees[r][rec.user] += 1;
    out.degrees[r][dataset.num_users + rec.item] += 1;
    out.edge_counts[r] += 1;
  }
  for (std::size_t r = 0; r < nr; ++r) {
    std::vector<std::size_t> ri, ci;
    std::vector<double> v;
    ri.reserve(edges[r].size() * 2);
    for (const auto& [u, i] : edges[r]) {
      const double coeff =
          1.0 / std::sqrt(static_cast<double>(out.degrees[r][u]) *
                          static_cast<double>(out.degrees[r][i]));
      ri.push_back(u);
      ci.push_back(i);
      v.push_back(coeff);
      ri.push_back(i);
      ci.push_back(u);
      v.push_back(coeff);
    }
    out.adjacency.push_back(std::make_shared<SparseMatrix>(
        SparseMatrix::from_triplets(n_nodes, n_nodes, ri, ci, v)));
  }
  return out;
}

CohortAssignment assign_cohorts(const RatingDataset& dataset) {
  if (dataset.train.empty()) fail("contract", "assign_cohorts needs a nonempty train split");
  const std::size_t m = dataset.num_users;
  std::vector<std::size_t> count(m, 0);
  for (const auto& rec : dataset.train) count[rec.user] += 1;

  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (count[a] != count[b]) return count[a] < count[b];
    return a < b;
  });

  CohortAssignment out;
  out.user_cohort.assign(m, Cohort::Normal);
  const std::size_t n_inactive = static_cast<std::size_t>(std::llround(0.80 * m));
  const std::size_t n_active = static_cast<std::size_t>(std::llround(0.05 * m));
  for (std::size_t k = 0; k < m; ++k) {
    Cohort c = Cohort::Normal;
    if (k < n_inactive)
      c = Cohort::Inactive;
    else if (k >= m - n_active)
      c = Cohort::Active;
    out.user_cohort[order[k]] = c;
    if (c == Cohort::Inactive)
      ++out.inactive;
    else if (c == Cohort::Active)
      ++out.active;
    else
      ++out.normal;
  }
  return out;
}

namespace {

void write_records(const std::string& path, const std::vector<RatingRecord>& recs) {
  std::ofstream out(path);
  if (!out) fail("io", "cannot write " + path);
  for (const auto& r : recs)
    out << r.user << '\t' << r.item << '\t' << r.rating << '\t' << r.timestamp << '\n';
}

std::vector<RatingRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open " + path);
  std::vector<RatingRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_line(line, '\t');
    if (f.size() != 4) fail("parse", "bad record line in " + path);
    out.push_back(RatingRecord{static_cast<std::size_t>(std::stoull(f[0])),
                               static_cast<std::size_t>(std::stoull(f[1])), std::stoi(f[2]),
                               std::stoll(f[3])});
  }
  return out;
}

void write_remap(const std::string& path, const std::vector<std::int64_t>& raw) {
  std::ofstream out(path);
  if (!out) fail("io", "cannot write " + path);
  for (std::size_t dense = 0; dense < raw.size(); ++dense)
    out << raw[dense] << '\t' << dense << '\n';
}

std::vector<std::int64_t> read_remap(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open " + path);
  std::vector<std::int64_t> raw;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_line(line, '\t');
    if (f.size() != 2) fail("parse", "bad remap line in " + path);
    const std::size_t dense = std::stoull(f[1]);
    if (dense != raw.size()) fail("parse", "remap table out of order in " + path);
    raw.push_back(std::stoll(f[0]));
  }
  return raw;
}

}  // namespace

void save_dataset(const std::string& dir, const RatingDataset& ds) {
  std::filesystem::create_directories(dir);
  std::ofstream meta(dir + "/meta.txt");
  if (!meta) fail("io", "cannot write " + dir + "/meta.txt");
  meta << "users=" << ds.num_users << "\nitems=" << ds.num_items << "\ncategories=";
  for (std::size_t i = 0; i < ds.categories.size(); ++i)
    meta << (i ? "," : "") << ds.categories[i];
  meta << "\n";
  write_records(dir + "/train.tsv", ds.train);
  write_records(dir + "/val.tsv", ds.val);
  write_records(dir + "/test.tsv", ds.test);
  write_remap(dir + "/user_map.tsv", ds.user_raw);
  write_remap(dir + "/item_map.tsv", ds.item_raw);
}

RatingDataset load_dataset(const std::string& dir) {
  std::ifstream meta(dir + "/meta.txt");
  if (!meta) fail("io", "cannot open " + dir + "/meta.txt (is this a prepared data dir?)");
  RatingDataset ds;
  std::string line;
  while (std::getline(meta, line)) {
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) fail("parse", "bad meta line: " + line);
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "users")
      ds.num_users = std::stoull(val);
    else if (key == "items")
      ds.num_items = std::stoull(val);
    else if (key == "categories")
      for (const auto& c : split_line(val, ',')) ds.categories.push_back(std::stoi(c));
    else
      fail("parse", "unknown meta key '" + key + "'");
  }
  ds.train = read_records(dir + "/train.tsv");
  ds.val = read_records(dir + "/val.tsv");
  ds.test = read_records(dir + "/test.tsv");
  ds.user_raw = read_remap(dir + "/user_map.tsv");
  ds.item_raw = read_remap(dir + "/item_map.tsv");
  return ds;
}

}  // namespace mhcl
