#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mhcl/sparse.hpp"

namespace mhcl {

struct RatingRecord {
  std::size_t user = 0;  // dense index in [0, M)
  std::size_t item = 0;  // dense index in [0, N)
  int rating = 0;
  std::int64_t timestamp = 0;  // optional, ignored by the model
};

/// Describes a TSV-like rating file: column order, delimiter and the declared
/// rating scale. The canonical layout is the ML-100K quad
/// user<TAB>item<TAB>rating<TAB>timestamp.
struct Schema {
  std::vector<std::string> columns = {"user", "item", "rating", "timestamp"};
  char delimiter = '\t';
  int scale_min = 1;
  int scale_max = 5;

  static Schema parse_file(const std::string& path);
};

/// Raw ingestion result: records carry dense ids; remap tables translate back.
struct Ingest {
  std::vector<RatingRecord> records;
  std::vector<std::int64_t> user_raw;  // dense user id -> raw id
  std::vector<std::int64_t> item_raw;
  std::size_t duplicate_count = 0;  // duplicate (user,item) pairs dropped (kept last)
  int scale_min = 1;
  int scale_max = 5;
};

Ingest load_tsv(const std::string& path, const Schema& schema);

/// Maps ratings on a wide scale onto `target_buckets` categories by ceiling
/// division; no-op precondition is scale wider than target. Monotone.
int bucket_of(int rating, int scale_max, int target_buckets = 10);
void bucket_scale(Ingest& ingest, int target_buckets = 10);

struct RatingDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<int> categories;  // ordered rating set R
  std::vector<RatingRecord> train, val, test;
  std::vector<std::int64_t> user_raw, item_raw;

  std::size_t category_index(int rating) const;  // contract error if absent
};

/// Deterministic shuffle under `seed`, then contiguous 8:1:1 partition.
RatingDataset split(const Ingest& ingest, std::uint64_t seed,
                    const std::vector<double>& ratios = {0.8, 0.1, 0.1});

/// Per-rating symmetric-normalized bipartite adjacency over M+N nodes
/// (users first), built from the train split only.
struct RatingSubgraphs {
  std::vector<std::shared_ptr<SparseMatrix>> adjacency;  // one per category
  std::vector<std::vector<std::size_t>> degrees;         // per category, per node
  std::vector<std::size_t> edge_counts;                  // train edges per category
};

RatingSubgraphs build_subgraphs(const RatingDataset& dataset);

enum class Cohort { Inactive, Normal, Active };

struct CohortAssignment {
  std::vector<Cohort> user_cohort;  // one per user
  std::size_t inactive = 0, normal = 0, active = 0;
};

/// Bottom 80% of users by train-interaction count -> Inactive, top 5% ->
/// Active, rest Normal; ties broken by ascending user id.
CohortAssignment assign_cohorts(const RatingDataset& dataset);

// Prepared-directory persistence (TSV files + meta, see External Interfaces).
void save_dataset(const std::string& dir, const RatingDataset& dataset);
RatingDataset load_dataset(const std::string& dir);

}  // namespace mhcl
