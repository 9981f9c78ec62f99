#include "mhcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mhcl/objective.hpp"

namespace mhcl {

double mse_of(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.empty()) fail("contract", "mse_of: bad inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - truth[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double mae_of(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.empty()) fail("contract", "mae_of: bad inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

namespace {

std::vector<double> predict_split(const Matrix& e, const std::vector<Matrix>& decoder,
                                  const std::vector<RatingRecord>& split,
                                  const std::vector<int>& categories, std::size_t num_users) {
  std::vector<Pair> pairs;
  pairs.reserve(split.size());
  for (const auto& rec : split) pairs.push_back({rec.user, rec.item});
  Matrix probs = decode_probs(e, decoder, pairs, num_users);
  return expected_ratings(probs, categories);
}

}  // namespace

MetricsReport evaluate_completion(const Matrix& e, const std::vector<Matrix>& decoder,
                                  const std::vector<RatingRecord>& split,
                                  const std::vector<int>& categories, std::size_t num_users) {
  if (split.empty()) fail("contract", "evaluate_completion: empty split");
  std::vector<double> pred = predict_split(e, decoder, split, categories, num_users);
  std::vector<double> truth;
  truth.reserve(split.size());
  for (const auto& rec : split) truth.push_back(rec.rating);
  MetricsReport rep;
  rep.mse = mse_of(pred, truth);
  rep.mae = mae_of(pred, truth);
  rep.count = split.size();
  return rep;
}

MetricsReport evaluate_recommendation(const Matrix& e, const std::vector<RatingRecord>& train,
                                      const std::vector<RatingRecord>& split,
                                      std::size_t num_users, std::size_t num_items,
                                      std::size_t k) {
  if (split.empty()) fail("contract", "evaluate_recommendation: empty split");
  std::vector<std::unordered_set<std::size_t>> seen(num_users), relevant(num_users);
  for (const auto& rec : train) seen[rec.user].insert(rec.item);
  for (const auto& rec : split) relevant[rec.user].insert(rec.item);

  double mrr = 0.0, ndcg = 0.0;
  std::size_t users = 0;
  std::size_t d = e.cols;
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t u = 0; u < num_users; ++u) {
    if (relevant[u].empty()) continue;
    scored.clear();
    const double* eu = e.row(u);
    for (std::size_t i = 0; i < num_items; ++i) {
      if (seen[u].count(i)) continue;
      const double* ev = e.row(num_users + i);
      double s = 0.0;
      for (std::size_t x = 0; x < d; ++x) s += eu[x] * ev[x];
      scored.emplace_back(s, i);
    }
    // Descending score, ascending item id on ties.
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::size_t top = std::min(k, scored.size());
    double rr = 0.0, dcg = 0.0;
    for (std::size_t rank = 0; rank < top; ++rank) {
      if (relevant[u].count(scored[rank].second)) {
        if (rr == 0.0) rr = 1.0 / static_cast<double>(rank + 1);
        dcg += 1.0 / std::log2(static_cast<double>(rank + 2));
      }
    }
    double idcg = 0.0;
    std::size_t ideal = std::min(relevant[u].size(), top);
    for (std::size_t rank = 0; rank < ideal; ++rank)
      idcg += 1.0 / std::log2(static_cast<double>(rank + 2));
    mrr += rr;
    ndcg += idcg > 0.0 ? dcg / idcg : 0.0;
    ++users;
  }
  if (users == 0) fail("contract", "evaluate_recommendation: no test users");
  MetricsReport rep;
  rep.mrr_at_10 = mrr / static_cast<double>(users);
  rep.ndcg_at_10 = ndcg / static_cast<double>(users);
  rep.count = users;
  return rep;
}

LongtailReport report_longtail(const Matrix& e, const std::vector<Matrix>& decoder,
                               const RatingDataset& ds, const CohortAssignment& cohorts) {
  LongtailReport rep;
  rep.rating_mse.assign(ds.categories.size(), 0.0);
  rep.rating_count.assign(ds.categories.size(), 0);
  if (ds.test.empty()) return rep;
  std::vector<double> pred = predict_split(e, decoder, ds.test, ds.categories, ds.num_users);
  double cohort_sum[3] = {0, 0, 0};
  std::vector<double> rating_sum(ds.categories.size(), 0.0);
  for (std::size_t p = 0; p < ds.test.size(); ++p) {
    const auto& rec = ds.test[p];
    double sq = (pred[p] - rec.rating) * (pred[p] - rec.rating);
    auto c = static_cast<std::size_t>(cohorts.user_cohort[rec.user]);
    cohort_sum[c] += sq;
    ++rep.cohort_count[c];
    std::size_t r = ds.category_index(rec.rating);
    rating_sum[r] += sq;
    ++rep.rating_count[r];
  }
  for (int c = 0; c < 3; ++c)
    rep.cohort_mse[c] = rep.cohort_count[c] ? cohort_sum[c] / rep.cohort_count[c] : 0.0;
  for (std::size_t r = 0; r < ds.categories.size(); ++r)
    rep.rating_mse[r] = rep.rating_count[r] ? rating_sum[r] / rep.rating_count[r] : 0.0;
  return rep;
}

}  // namespace mhcl
