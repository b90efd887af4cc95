#include "paml/lemma/two_group.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "paml/error.hpp"

namespace paml::lemma {

void TwoGroupSpec::validate() const {
  const bool ok = std::isfinite(p1) && std::isfinite(p2) && p2 > 0 && p1 >= p2 && std::abs(p1 + p2 - 1) < 1e-12;
  if (!ok) throw InputError("group probabilities must satisfy p1 >= p2 > 0 and p1 + p2 = 1");
  if (!std::isfinite(x1) || !std::isfinite(x2)) throw InputError("group targets must be finite");
  if (!std::isfinite(alpha) || alpha < 0) throw InputError("alpha must be finite and non-negative");
  if (alpha2 && (!std::isfinite(*alpha2) || *alpha2 < 0)) throw InputError("alpha2 must be finite and non-negative");
}

double TwoGroupSpec::minor_alpha() const { return alpha2 ? *alpha2 : alpha2_equalizing(alpha, p1, p2); }

double step_factor(double alpha, Convention c) { return c == Convention::Descent ? 1 - 2 * alpha : 1 + 2 * alpha; }

double group_loss(double theta, double x, double alpha, Convention c) {
  const double g = 2 * (theta - x);  // d/dtheta (theta - x)^2
  const double adapted = c == Convention::Descent ? theta - alpha * g : theta + alpha * g;
  return (adapted - x) * (adapted - x);
}

double adapted_loss(const TwoGroupSpec& s, double theta, double a1, double a2) {
  return s.p1 * group_loss(theta, s.x1, a1, s.convention) + s.p2 * group_loss(theta, s.x2, a2, s.convention);
}

double theta_star_fixed(const TwoGroupSpec& s) { return (s.x2 * s.p2 + s.x1 * s.p1) / (s.p2 + s.p1); }

double theta_star_adaptive(const TwoGroupSpec& s, double a1, double a2) {
  const double w1 = std::pow(step_factor(a1, s.convention), 2);
  const double w2 = std::pow(step_factor(a2, s.convention), 2);
  return (w1 * s.p1 * s.x1 + w2 * s.p2 * s.x2) / (w1 * s.p1 + w2 * s.p2);
}

double alpha2_equalizing(double alpha1, double p1, double p2) {
  if (!(p1 > 0) || !(p2 > 0)) throw InputError("alpha2_equalizing needs positive probabilities");
  return ((2 * alpha1 + 1) * std::sqrt(p1 / p2) - 1) / 2;
}

double alpha2_descent_balanced(double alpha1, double p1, double p2) {
  if (!(p1 > 0) || !(p2 > 0)) throw InputError("alpha2_descent_balanced needs positive probabilities");
  return (1 - (1 - 2 * alpha1) * std::sqrt(p2 / p1)) / 2;
}

Minimum minimize_adapted(const TwoGroupSpec& s, double a1, double a2, double tol) {
  auto f = [&](double t) { return adapted_loss(s, t, a1, a2); };
  // derivative of the definition via the chain rule through each inner step
  auto df = [&](double t) {
    double d = 0;
    const double k1 = step_factor(a1, s.convention), k2 = step_factor(a2, s.convention);
    d += s.p1 * 2 * (k1 * (t - s.x1)) * k1;
    d += s.p2 * 2 * (k2 * (t - s.x2)) * k2;
    return d;
  };
  const double span = std::max(1.0, std::abs(s.x1 - s.x2));
  double lo = std::min(s.x1, s.x2) - span, hi = std::max(s.x1, s.x2) + span;
  Minimum m;
  const double inv_phi = (std::sqrt(5.0) - 1) / 2;
  double c = hi - inv_phi * (hi - lo), d = lo + inv_phi * (hi - lo);
  double fc = f(c), fd = f(d);
  while (hi - lo > 1e-6 * span && m.iterations < 200) {
    ++m.iterations;
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
    }
  }
  // widen slightly, then bisect on the derivative sign
  const double pad = 1e-6 * span;
  lo -= pad;
  hi += pad;
  double dlo = df(lo), dhi = df(hi);
  if (dlo > 0 || dhi < 0) {
    // flat or degenerate objective: keep the golden-section point
    m.theta = (lo + hi) / 2;
    m.value = f(m.theta);
    return m;
  }
  while (hi - lo > tol && m.iterations < 400) {
    ++m.iterations;
    const double mid = (lo + hi) / 2;
    const double dm = df(mid);
    if (dm == 0) {
      lo = hi = mid;
      dlo = dhi = 0;
      break;
    }
    if (dm < 0) {
      lo = mid;
      dlo = dm;
    } else {
      hi = mid;
      dhi = dm;
    }
  }
  m.theta = dhi != dlo ? lo - dlo * (hi - lo) / (dhi - dlo) : (lo + hi) / 2;
  m.theta = std::clamp(m.theta, lo, hi);
  m.value = f(m.theta);
  return m;
}

LemmaReport verify_lemmas(const TwoGroupSpec& s, double tol) {
  s.validate();
  LemmaReport r;
  const double a = s.alpha;
  r.alpha2 = s.minor_alpha();
  const Minimum fixed = minimize_adapted(s, a, a);
  const Minimum adaptive = minimize_adapted(s, a, r.alpha2);
  r.theta_star = fixed.theta;
  r.theta_star_prime = adaptive.theta;
  r.closed_form_error = std::max(std::abs(theta_star_fixed(s) - fixed.theta),
                                 std::abs(theta_star_adaptive(s, a, r.alpha2) - adaptive.theta));
  r.group1_loss = group_loss(r.theta_star, s.x1, a, s.convention);
  r.group2_loss = group_loss(r.theta_star, s.x2, a, s.convention);
  r.group1_loss_prime = group_loss(r.theta_star_prime, s.x1, a, s.convention);
  r.group2_loss_prime = group_loss(r.theta_star_prime, s.x2, r.alpha2, s.convention);
  r.L_star = fixed.value;
  r.L_star_prime = adaptive.value;
  r.lemma1_holds = r.group1_loss <= r.group2_loss + tol;
  r.minor_improves = r.group2_loss_prime <= r.group2_loss + tol;
  r.total_improves = r.L_star_prime <= r.L_star + tol;
  r.lemma2_holds = r.minor_improves && r.total_improves;
  return r;
}

BoundReport bound_check(std::span<const double> losses, std::span<const double> grad_norms,
                        std::span<const double> alphas, const std::vector<Eigen::VectorXd>& embeddings) {
  const std::size_t n = losses.size();
  if (grad_norms.size() != n || alphas.size() != n || embeddings.size() != n)
    throw InputError("bound_check: inputs differ in length");
  BoundReport r;
  double max_h = 0;
  for (const auto& h : embeddings) max_h = std::max(max_h, h.norm());
  const double u = static_cast<double>(n);
  r.holds_first_order = true;
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = grad_norms[i] * grad_norms[i] * alphas[i];
    r.first_order_rhs += (u - 1) * grad_norms[i] * grad_norms[i] * std::abs(alphas[i]);
    for (std::size_t j = 0; j < i; ++j) {
      ++r.pairs;
      r.lhs += std::abs(losses[i] - losses[j]);
      const double tj = grad_norms[j] * grad_norms[j] * alphas[j];
      const double bound =
          grad_norms[i] * grad_norms[i] * std::abs(alphas[i]) + grad_norms[j] * grad_norms[j] * std::abs(alphas[j]);
      if (std::abs(ti - tj) > bound) r.holds_first_order = false;
    }
  }
  r.first_order_rhs += u * (u - 1) * max_h;
  r.holds_full = r.lhs <= r.first_order_rhs;
  return r;
}

}  // namespace paml::lemma
