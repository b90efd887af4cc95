#include "paml/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>

#include "paml/error.hpp"

namespace paml::eval {

double mean(std::span<const double> v) {
  if (v.empty()) throw InputError("mean of an empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double mse(std::span<const double> residuals) {
  if (residuals.empty()) throw InputError("mse: empty query set");
  double s = 0;
  for (double r : residuals) s += r * r;
  return s / static_cast<double>(residuals.size());
}

PerUser mse(const std::vector<std::vector<double>>& residuals) {
  PerUser out;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    if (residuals[i].empty()) {
      std::cerr << "warning: user " << i << " has no query items; skipped\n";
      continue;
    }
    out.values.push_back(mse(residuals[i]));
    out.kept.push_back(i);
  }
  if (!out.values.empty()) out.mean = mean(out.values);
  return out;
}

double ndcg_at_k(std::span<const double> truth, std::span<const double> predicted, std::size_t k) {
  if (truth.size() != predicted.size()) throw InputError("ndcg: ratings and scores differ in length");
  if (truth.empty()) throw InputError("ndcg: no items");
  if (k == 0) throw InputError("ndcg: K must be positive");
  for (double t : truth)
    if (!(t >= 0)) throw InputError("ndcg: relevance grades must be non-negative");
  k = std::min(k, truth.size());
  std::vector<std::size_t> order(truth.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return predicted[a] > predicted[b]; });
  std::vector<double> ideal(truth.begin(), truth.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double dcg = 0, idcg = 0;
  for (std::size_t r = 0; r < k; ++r) {
    const double disc = std::log2(static_cast<double>(r) + 2.0);
    dcg += (std::exp2(truth[order[r]]) - 1) / disc;
    idcg += (std::exp2(ideal[r]) - 1) / disc;
  }
  return idcg == 0 ? 1.0 : dcg / idcg;
}

double auc(std::span<const double> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw InputError("auc: labels and scores differ in length");
  // rank-sum form with average ranks for ties
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0;
  std::size_t n_pos = 0;
  for (double l : labels) n_pos += l > 0.5 ? 1 : 0;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw NumericError("auc undefined: only one class present");
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2;
    for (std::size_t m = i; m < j; ++m)
      if (labels[order[m]] > 0.5) rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

double weighted_nel(std::span<const double> labels, std::span<const double> p, double w_negative, double w_positive) {
  if (labels.size() != p.size()) throw InputError("weighted_nel: labels and probabilities differ in length");
  if (labels.empty()) throw InputError("weighted_nel: no items");
  double s = 0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const double y = labels[j] > 0.5 ? 1.0 : 0.0;
    const double w = y > 0 ? w_positive : w_negative;
    if (y > 0) s -= w * y * std::log(std::max(p[j], 1e-12));
  }
  return s / static_cast<double>(labels.size());
}

TTest t_test_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InputError("t-test needs at least two values per sample");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  double ssa = 0, ssb = 0;
  for (double x : a) ssa += (x - ma) * (x - ma);
  for (double x : b) ssb += (x - mb) * (x - mb);
  TTest r;
  r.df = na + nb - 2;
  const double pooled = (ssa + ssb) / r.df;
  if (!(pooled > 0)) throw NumericError("t-test undefined: zero pooled variance");
  r.t = (ma - mb) / std::sqrt(pooled * (1 / na + 1 / nb));
  // two-tailed p = I_{df / (df + t^2)}(df / 2, 1 / 2)
  r.p = boost::math::ibeta(r.df / 2, 0.5, r.df / (r.df + r.t * r.t));
  return r;
}

}  // namespace paml::eval
