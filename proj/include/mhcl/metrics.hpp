#pragma once

#include "mhcl/dataset.hpp"
#include "mhcl/matrix.hpp"

namespace mhcl {

struct MetricsReport {
  double mse = 0.0, mae = 0.0;           // completion
  double mrr_at_10 = 0.0, ndcg_at_10 = 0.0;  // recommendation
  std::size_t count = 0;  // evaluated pairs (completion) or users (recommendation)
};

double mse_of(const std::vector<double>& pred, const std::vector<double>& truth);
double mae_of(const std::vector<double>& pred, const std::vector<double>& truth);

/// Expected-rating regression metrics over a split. Errors on empty splits.
MetricsReport evaluate_completion(const Matrix& e, const std::vector<Matrix>& decoder,
                                  const std::vector<RatingRecord>& split,
                                  const std::vector<int>& categories, std::size_t num_users);

/// Full-ranking top-k metrics: per test user, rank all items outside the
/// user's train set by dot(e_u, e_v) (ties broken by ascending item id),
/// binary relevance over held-out interactions, averaged over users with at
/// least one test item.
MetricsReport evaluate_recommendation(const Matrix& e, const std::vector<RatingRecord>& train,
                                      const std::vector<RatingRecord>& split,
                                      std::size_t num_users, std::size_t num_items,
                                      std::size_t k = 10);

struct LongtailReport {
  double cohort_mse[3] = {0, 0, 0};  // Inactive, Normal, Active
  std::size_t cohort_count[3] = {0, 0, 0};
  std::vector<double> rating_mse;  // per category
  std::vector<std::size_t> rating_count;
};

LongtailReport report_longtail(const Matrix& e, const std::vector<Matrix>& decoder,
                               const RatingDataset& ds, const CohortAssignment& cohorts);

}  // namespace mhcl
