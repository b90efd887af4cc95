#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace paml::eval {

/// Per-user values plus their unweighted mean.
struct PerUser {
  std::vector<double> values;
  std::vector<std::size_t> kept;  // indices of users that produced a value
  double mean = 0;
};

/// Mean squared residual of one user's query set.
double mse(std::span<const double> residuals);

/// Per-user mean squared residual; users with no residuals are skipped with a warning.
PerUser mse(const std::vector<std::vector<double>>& residuals);

/// nDCG@K with gains 2^rating - 1 and discount log2(1 + rank).
/// Items are ranked by predicted score descending, ties by item position.
/// K is truncated to the item count; an all-zero ideal DCG gives 1.
/// Ratings must be non-negative.
double ndcg_at_k(std::span<const double> true_ratings, std::span<const double> predicted, std::size_t k);

/// Mann-Whitney AUC; tied scores count one half. Labels are 0/1.
double auc(std::span<const double> labels, std::span<const double> scores);

/// Mean over items of -w * label * ln(max(p_click, 1e-12)) with w = 0.9 for clicks, 0.1 otherwise.
double weighted_nel(std::span<const double> labels, std::span<const double> click_probabilities,
                    double w_negative = 0.1, double w_positive = 0.9);

struct TTest {
  double t = 0;
  double p = 1;
  double df = 0;
};

/// Equal-variance two-sample Student's t-test, two-tailed.
TTest t_test_two_sample(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> v);

}  // namespace paml::eval
