#pragma once

#include <string>
#include <vector>

#include "prema/common.hpp"

namespace prema {

// Ranked gallery for one query. Scores are non-increasing; the query itself
// is never part of its own gallery.
struct RetrievalResult {
  std::string query_id;
  int query_class = 0;
  std::vector<std::string> ranked_ids;
  std::vector<double> scores;
  std::vector<char> relevant;  // same-class flags aligned with ranked_ids

  std::size_t relevant_count() const;
};

struct PrPoint {
  double recall = 0;
  double precision = 0;
};

struct MetricsReport {
  double map = 0;
  double auc_pr = 0;
  double ndcg = 0;
  double f1_at_k = 0;
  std::size_t k = 10;
  double accuracy_per_instance = 0;
  double accuracy_per_class = 0;
  std::vector<std::pair<std::string, double>> per_query_ap;
  std::vector<PrPoint> pr_curve;  // macro-averaged interpolated curve
};

// AP = mean over relevant ranks r of precision@r. Queries without relevant
// gallery items are undefined and excluded by the callers below.
double compute_ap(const RetrievalResult& result);

// Means over queries with >= 1 relevant item; queries with none are skipped
// (a note goes to stderr).
double compute_map(const std::vector<RetrievalResult>& results);
double compute_ndcg_single(const RetrievalResult& result);
double compute_ndcg(const std::vector<RetrievalResult>& results);

// Trapezoid under the interpolated precision-recall curve, per query, then
// unweighted mean.
double compute_auc_pr_single(const RetrievalResult& result);
double compute_auc_pr(const std::vector<RetrievalResult>& results);

// Interpolated PR points of a single query (one point per rank, precision
// replaced by the running maximum from the right).
std::vector<PrPoint> pr_points(const RetrievalResult& result);
// Macro-average of interpolated precision on a fixed recall grid.
std::vector<PrPoint> mean_pr_curve(const std::vector<RetrievalResult>& results,
                                   std::size_t grid = 51);

// Harmonic mean of precision@k and recall@k, averaged over queries. k larger
// than a gallery is clamped with a warning.
double compute_f1(const std::vector<RetrievalResult>& results, std::size_t k);

}  // namespace prema
