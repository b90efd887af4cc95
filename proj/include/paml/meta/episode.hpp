#pragma once

#include <optional>
#include <span>
#include <vector>

#include "paml/core/autodiff.hpp"
#include "paml/memory/kernel.hpp"
#include "paml/meta/algorithm.hpp"
#include "paml/meta/lr_head.hpp"

namespace paml::meta {

/// theta - alpha * grad L_support(theta): the single inner step.
template <class Scalar>
ParamSet<Scalar> inner_adapt(const ParamSet<Scalar>& theta, const ModelSpec& spec, const Batch& support, Scalar alpha) {
  using std::isfinite;
  if (!isfinite(alpha) || alpha < Scalar(0)) throw NumericError("inner_adapt: learning rate must be finite and >= 0");
  return axpy_update(theta, grad(theta, spec, support).params, alpha);
}

/// Meta-SGD inner step with one rate per parameter.
template <class Scalar>
ParamSet<Scalar> inner_adapt(const ParamSet<Scalar>& theta, const ModelSpec& spec, const Batch& support,
                             const Vec<Scalar>& alpha) {
  if ((alpha.array() < Scalar(0)).any()) throw NumericError("inner_adapt: negative per-parameter rate");
  return axpy_update(theta, grad(theta, spec, support).params, alpha);
}

/// alpha' alone, or alpha' + alpha_tilde when the tree contributes.
inline double compute_alpha(double alpha_prime, std::optional<double> tree_contribution = std::nullopt) {
  return tree_contribution ? alpha_prime + *tree_contribution : alpha_prime;
}

/// |grad L_support|^2 * |alpha|.
template <class Scalar>
Scalar reg_term(const ParamSet<Scalar>& theta, const ModelSpec& spec, const Batch& support, Scalar alpha) {
  using std::abs;
  return grad(theta, spec, support).params.flat().squaredNorm() * abs(alpha);
}

/// Everything one episode's objective depends on besides theta and psi.
template <class Scalar>
struct EpisodeSetup {
  Algorithm algorithm = Algorithm::Paml;
  const ModelSpec* spec = nullptr;
  const LrHeadSpec* head = nullptr;
  Scalar fixed_alpha{};   // maml-fixed rate, or the warm-up rate when `warmup`
  Scalar gamma{};         // regularizer weight (reg-paml only)
  bool warmup = false;    // at-paml warm-up: fixed rate, nothing learned through alpha
  // at-paml neighbours
  std::vector<Vec<Scalar>> nodes;
  std::vector<Scalar> node_lrs;
  Scalar delta{};
  Scalar sigma{};
};

/// Plain (non-differentiated) evaluation of one episode's outer objective
/// L_query(theta_i) + gamma * L^r. Used as the finite-difference oracle for
/// the exact gradient below, so it is written directly from the definition.
template <class Scalar>
Scalar episode_objective(const ParamSet<Scalar>& theta, const ParamSet<Scalar>& psi, const Vec<Scalar>& meta_sgd,
                         const Batch& support, const Batch& query, const EpisodeSetup<Scalar>& s) {
  const ModelSpec& spec = *s.spec;
  if (s.algorithm == Algorithm::Transfer) {
    Batch all = support;
    all.items.insert(all.items.end(), query.items.begin(), query.items.end());
    all.targets.insert(all.targets.end(), query.targets.begin(), query.targets.end());
    return batch_loss(theta, spec, all);
  }
  const Gradient<Scalar> gs = grad(theta, spec, support);
  if (s.algorithm == Algorithm::MetaSgd)
    return batch_loss(axpy_update(theta, gs.params, meta_sgd), spec, query);
  Scalar alpha = s.fixed_alpha;
  if (uses_lr_head(s.algorithm) && !s.warmup) {
    const Vec<Scalar> h = user_embedding(theta, spec, support.user);
    alpha = lr_alpha(psi, *s.head, h);
    if (s.algorithm == Algorithm::AtPaml && !s.nodes.empty()) {
      std::vector<Scalar> sims;
      for (const auto& n : s.nodes) sims.push_back(memory::kernel_similarity(h, n, s.delta));
      alpha += memory::blend_lr<Scalar>(sims, s.node_lrs, s.sigma);
    }
  }
  Scalar j = batch_loss(axpy_update(theta, gs.params, alpha), spec, query);
  if (s.algorithm == Algorithm::RegPaml) j += s.gamma * gs.params.flat().squaredNorm() * alpha;
  return j;
}

/// Per-episode quantities written to the training log.
struct EpisodeLog {
  int user_id = 0;
  double query_loss = 0;
  double support_loss = 0;
  double reg = 0;        // L^r (unweighted)
  double objective = 0;  // query_loss + gamma * reg
  double alpha = 0;      // mean rate for meta-sgd
  double alpha_prime = 0;
  double alpha_tilde = 0;
  double support_grad_norm = 0;
  Vec<double> embedding;
};

/// Exact gradient of one episode's objective.
struct EpisodeGradient {
  ParamSet<double> theta;
  ParamSet<double> psi;        // empty unless alpha comes from the head
  Vec<double> meta_sgd;        // empty unless meta-sgd
  memory::BlendGradient nodes;  // at-paml, post-warm-up only
  ParamSet<double> psi_alpha;  // literal rule only: dalpha/dpsi * L_query(theta)
  EpisodeLog log;
};

/// Gradient of L_query(theta - alpha g_s) + gamma |g_s|^2 alpha with respect to
/// theta, psi, the meta-sgd rates and the neighbour nodes.
///
/// d/dtheta = g_q - H_s u + dJ/dalpha * dalpha/dtheta,  u = alpha g_q - 2 gamma alpha g_s,
/// dJ/dalpha = -g_q . g_s + gamma |g_s|^2, and dalpha/dtheta flows through h into the
/// user embedding tables. One Hessian-vector product per episode.
EpisodeGradient episode_gradient(const ParamSet<double>& theta, const ParamSet<double>& psi,
                                 const Vec<double>& meta_sgd, const Batch& support, const Batch& query,
                                 const EpisodeSetup<double>& setup, bool literal_psi = false);

}  // namespace paml::meta
