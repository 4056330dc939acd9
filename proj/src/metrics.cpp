#include "prema/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace prema {

std::size_t RetrievalResult::relevant_count() const {
  std::size_t n = 0;
  for (char r : relevant) n += r != 0;
  return n;
}

double compute_ap(const RetrievalResult& result) {
  std::size_t hits = 0;
  double acc = 0.0;
  for (std::size_t r = 0; r < result.relevant.size(); ++r) {
    if (result.relevant[r]) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  if (hits == 0) return 0.0;
  return acc / static_cast<double>(hits);
}

namespace {

template <class Fn>
double mean_over_valid(const std::vector<RetrievalResult>& results, const char* what, Fn fn) {
  double acc = 0.0;
  std::size_t n = 0;
  std::size_t skipped = 0;
  for (const RetrievalResult& r : results) {
    if (r.relevant_count() == 0) {
      ++skipped;
      continue;
    }
    acc += fn(r);
    ++n;
  }
  if (skipped > 0) {
    std::cerr << "[metrics] " << what << ": skipped " << skipped
              << " queries with no relevant gallery items\n";
  }
  if (n == 0) return 0.0;
  return acc / static_cast<double>(n);
}

}  // namespace

double compute_map(const std::vector<RetrievalResult>& results) {
  return mean_over_valid(results, "mAP", compute_ap);
}

double compute_ndcg_single(const RetrievalResult& result) {
  double dcg = 0.0;
  for (std::size_t r = 0; r < result.relevant.size(); ++r) {
    if (result.relevant[r]) dcg += 1.0 / std::log2(static_cast<double>(r + 2));
  }
  const std::size_t rel = result.relevant_count();
  double idcg = 0.0;
  for (std::size_t r = 0; r < rel; ++r) idcg += 1.0 / std::log2(static_cast<double>(r + 2));
  if (idcg == 0.0) return 0.0;
  return dcg / idcg;
}

double compute_ndcg(const std::vector<RetrievalResult>& results) {
  return mean_over_valid(results, "NDCG", compute_ndcg_single);
}

std::vector<PrPoint> pr_points(const RetrievalResult& result) {
  const std::size_t n = result.relevant.size();
  const std::size_t rel = result.relevant_count();
  std::vector<PrPoint> pts;
  if (rel == 0) return pts;
  pts.reserve(n);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (result.relevant[r]) ++hits;
    pts.push_back({static_cast<double>(hits) / static_cast<double>(rel),
                   static_cast<double>(hits) / static_cast<double>(r + 1)});
  }
  // Interpolate: precision at recall x becomes max precision at recall >= x.
  double run = 0.0;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    run = std::max(run, it->precision);
    it->precision = run;
  }
  return pts;
}

double compute_auc_pr_single(const RetrievalResult& result) {
  std::vector<PrPoint> pts = pr_points(result);
  if (pts.empty()) return 0.0;
  double auc = 0.0;
  double prev_r = 0.0;
  double prev_p = pts.front().precision;  // extend the curve flat to recall 0
  for (const PrPoint& pt : pts) {
    auc += (pt.recall - prev_r) * 0.5 * (pt.precision + prev_p);
    prev_r = pt.recall;
    prev_p = pt.precision;
  }
  return auc;
}

double compute_auc_pr(const std::vector<RetrievalResult>& results) {
  return mean_over_valid(results, "PR-AUC", compute_auc_pr_single);
}

std::vector<PrPoint> mean_pr_curve(const std::vector<RetrievalResult>& results, std::size_t grid) {
  std::vector<PrPoint> curve(grid);
  std::size_t valid = 0;
  std::vector<std::vector<PrPoint>> all;
  for (const RetrievalResult& r : results) {
    auto pts = pr_points(r);
    if (!pts.empty()) {
      all.push_back(std::move(pts));
      ++valid;
    }
  }
  for (std::size_t g = 0; g < grid; ++g) {
    const double recall = grid == 1 ? 0.0 : static_cast<double>(g) / static_cast<double>(grid - 1);
    double acc = 0.0;
    for (const auto& pts : all) {
      // interpolated precision at this recall level: max precision among
      // points with recall >= level (0 past the end).
      double p = 0.0;
      for (const PrPoint& pt : pts) {
        if (pt.recall >= recall - 1e-12) {
          p = pt.precision;  // already a running max from the right
          break;
        }
      }
      acc += p;
    }
    curve[g] = {recall, valid ? acc / static_cast<double>(valid) : 0.0};
  }
  return curve;
}

double compute_f1(const std::vector<RetrievalResult>& results, std::size_t k) {
  if (k == 0) throw std::invalid_argument("compute_f1: k must be positive");
  double acc = 0.0;
  std::size_t n = 0;
  bool warned = false;
  for (const RetrievalResult& r : results) {
    const std::size_t rel = r.relevant_count();
    if (rel == 0) continue;
    std::size_t kk = k;
    if (kk > r.relevant.size()) {
      if (!warned) {
        std::cerr << "[metrics] F1: k=" << k << " exceeds gallery size " << r.relevant.size()
                  << ", clamping\n";
        warned = true;
      }
      kk = r.relevant.size();
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < kk; ++i) hits += r.relevant[i] != 0;
    const double prec = static_cast<double>(hits) / static_cast<double>(kk);
    const double rec = static_cast<double>(hits) / static_cast<double>(rel);
    const double f1 = (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    acc += f1;
    ++n;
  }
  if (n == 0) return 0.0;
  return acc / static_cast<double>(n);
}

}  // namespace prema
