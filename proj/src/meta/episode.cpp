#include "paml/meta/episode.hpp"

namespace paml::meta {

EpisodeGradient episode_gradient(const ParamSet<double>& theta, const ParamSet<double>& psi,
                                 const Vec<double>& meta_sgd, const Batch& support, const Batch& query,
                                 const EpisodeSetup<double>& s, bool literal_psi) {
  const ModelSpec& spec = *s.spec;
  EpisodeGradient out;
  out.log.embedding = user_embedding(theta, spec, support.user);

  if (s.algorithm == Algorithm::Transfer) {
    Batch all = support;
    all.items.insert(all.items.end(), query.items.begin(), query.items.end());
    all.targets.insert(all.targets.end(), query.targets.begin(), query.targets.end());
    Gradient<double> g = grad(theta, spec, all);
    out.theta = std::move(g.params);
    out.log.query_loss = g.loss;
    out.log.objective = g.loss;
    return out;
  }

  const Gradient<double> gs = grad(theta, spec, support);
  out.log.support_loss = gs.loss;
  const double gs_sq = gs.params.flat().squaredNorm();
  out.log.support_grad_norm = std::sqrt(gs_sq);

  if (s.algorithm == Algorithm::MetaSgd) {
    const Gradient<double> gq = grad(axpy_update(theta, gs.params, meta_sgd), spec, query);
    const ParamSet<double> u(theta.layout(), meta_sgd.cwiseProduct(gq.params.flat()));
    const ParamSet<double> hu = hvp(theta, spec, support, u);
    out.theta = ParamSet<double>(theta.layout(), gq.params.flat() - hu.flat());
    out.meta_sgd = -gq.params.flat().cwiseProduct(gs.params.flat());
    out.log.query_loss = gq.loss;
    out.log.objective = gq.loss;
    out.log.alpha = meta_sgd.mean();
    return out;
  }

  const bool learned = uses_lr_head(s.algorithm) && !s.warmup;
  const bool tree = learned && s.algorithm == Algorithm::AtPaml && !s.nodes.empty();
  const double gamma = s.algorithm == Algorithm::RegPaml ? s.gamma : 0.0;

  double alpha = s.fixed_alpha;
  LrTape<double> lt;
  std::vector<memory::BlendInput> neighbours;
  memory::BlendResult blend;
  if (learned) {
    lt = lr_forward(psi, *s.head, out.log.embedding);
    out.log.alpha_prime = lt.alpha;
    alpha = lt.alpha;
    if (tree) {
      for (std::size_t k = 0; k < s.nodes.size(); ++k) neighbours.push_back({s.nodes[k], s.node_lrs[k]});
      blend = memory::blend_forward(out.log.embedding, neighbours, s.delta, s.sigma);
      out.log.alpha_tilde = blend.alpha_tilde;
      alpha = compute_alpha(lt.alpha, blend.alpha_tilde);
    }
  }
  out.log.alpha = alpha;

  const Gradient<double> gq = grad(axpy_update(theta, gs.params, alpha), spec, query);
  out.log.query_loss = gq.loss;
  out.log.reg = gs_sq * alpha;
  out.log.objective = gq.loss + gamma * out.log.reg;

  const ParamSet<double> u(theta.layout(), alpha * gq.params.flat() - (2.0 * gamma * alpha) * gs.params.flat());
  const ParamSet<double> hu = hvp(theta, spec, support, u);
  out.theta = ParamSet<double>(theta.layout(), gq.params.flat() - hu.flat());

  if (learned) {
    const double dj_dalpha = -gq.params.flat().dot(gs.params.flat()) + gamma * gs_sq;
    out.psi = ParamSet<double>::zeros_like(psi);
    Vec<double> dh = lr_backward(psi, *s.head, out.log.embedding, lt, dj_dalpha, &out.psi);
    if (tree) {
      out.nodes = memory::blend_backward(out.log.embedding, neighbours, blend, s.delta, s.sigma, dj_dalpha);
      dh += out.nodes.query;
    }
    accumulate_user_embedding_grad(spec, support.user, dh, out.theta);
    if (literal_psi) {
      out.psi_alpha = ParamSet<double>::zeros_like(psi);
      lr_backward(psi, *s.head, out.log.embedding, lt, batch_loss(theta, spec, query), &out.psi_alpha);
    }
  }
  if (!out.theta.all_finite() || (!out.psi.empty() && !out.psi.all_finite()))
    throw NumericError("non-finite meta-gradient");
  return out;
}

}  // namespace paml::meta
