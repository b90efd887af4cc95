#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace paml::lemma {

/// Sign of the inner step on the per-group loss (theta - x)^2.
/// Descent: theta_g = theta - alpha * dL/dtheta, the convention used for training.
/// Ascent: theta_g = theta + alpha * dL/dtheta, which produces (2 alpha + 1) factors.
enum class Convention { Descent, Ascent };

struct TwoGroupSpec {
  double p1 = 0.7;
  double p2 = 0.3;
  double x1 = 0.0;
  double x2 = 1.0;
  double alpha = 0.1;                 // shared rate of the fixed-rate problem (and alpha1)
  std::optional<double> alpha2;       // minor-group rate; unset: alpha2_equalizing
  Convention convention = Convention::Descent;

  void validate() const;
  double alpha1() const { return alpha; }
  double minor_alpha() const;
};

/// Multiplier (theta_g - x_g) / (theta - x_g) of one inner step.
double step_factor(double alpha, Convention c);

/// Total adapted loss sum_g p_g (theta_g - x_g)^2, evaluated from the step definition.
double adapted_loss(const TwoGroupSpec& s, double theta, double a1, double a2);

/// Per-group adapted loss (theta_g - x_g)^2.
double group_loss(double theta, double x, double alpha, Convention c);

/// (x2 p2 + x1 p1) / (p2 + p1).
double theta_star_fixed(const TwoGroupSpec& s);

/// Minimizer with per-group rates: sum p_g w_g x_g / sum p_g w_g, w_g = step_factor(alpha_g)^2.
double theta_star_adaptive(const TwoGroupSpec& s, double a1, double a2);

/// The rate-equalizing minor-group rate ((2 a1 + 1) sqrt(p1 / p2) - 1) / 2.
double alpha2_equalizing(double alpha1, double p1, double p2);

/// Descent counterpart of the equalizing rate: (1 - 2 a2)^2 = (1 - 2 a1)^2 p2 / p1,
/// so the minor weight shrinks by the ratio the equalizing rate grows it under
/// ascent. (1 - (1 - 2 a1) sqrt(p2 / p1)) / 2.
double alpha2_descent_balanced(double alpha1, double p1, double p2);

/// Scalar minimizer: golden-section search on a bracket followed by bisection
/// and a secant step on the derivative. Tolerance `tol` on theta.
struct Minimum {
  double theta = 0;
  double value = 0;
  int iterations = 0;
};
Minimum minimize_adapted(const TwoGroupSpec& s, double a1, double a2, double tol = 1e-10);

struct LemmaReport {
  double theta_star = 0;        // fixed-rate minimizer (numeric)
  double theta_star_prime = 0;  // per-group-rate minimizer (numeric)
  double alpha2 = 0;
  double closed_form_error = 0;           // max |closed form - numeric| over both minimizers
  double group1_loss = 0, group2_loss = 0;              // at theta_star
  double group1_loss_prime = 0, group2_loss_prime = 0;  // at theta_star_prime
  double L_star = 0;
  double L_star_prime = 0;
  bool lemma1_holds = false;  // group1_loss <= group2_loss
  bool minor_improves = false;
  bool total_improves = false;
  bool lemma2_holds = false;  // minor_improves && total_improves
};

/// Comparisons use an absolute slack of `tol`.
LemmaReport verify_lemmas(const TwoGroupSpec& s, double tol = 1e-10);

struct BoundReport {
  double lhs = 0;              // sum_{i>j} |L_i - L_j|
  double first_order_rhs = 0;  // sum_i (U-1) g_i^2 |a_i| + U (U-1) max_i |h_i|
  bool holds_full = false;     // lhs <= first_order_rhs (informational)
  bool holds_first_order = false;  // pairwise triangle inequality for every pair
  std::size_t pairs = 0;
};

BoundReport bound_check(std::span<const double> losses, std::span<const double> grad_norms,
                        std::span<const double> alphas, const std::vector<Eigen::VectorXd>& embeddings);

}  // namespace paml::lemma
