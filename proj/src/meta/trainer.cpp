#include "paml/meta/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>

namespace paml::meta {

Vec<double> Adam::step(const Vec<double>& g, double lr) {
  if (m.size() != g.size()) {
    m = Vec<double>::Zero(g.size());
    v = Vec<double>::Zero(g.size());
    t = 0;
  }
  ++t;
  m = beta1 * m + (1 - beta1) * g;
  v = beta2 * v + (1 - beta2) * g.cwiseProduct(g);
  const double c1 = 1 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1 - std::pow(beta2, static_cast<double>(t));
  return (lr / c1) * m.array().cwiseQuotient((v.array() / c2).sqrt() + eps).matrix();
}

TrainedModel init_model(const ModelSpec& spec, const TrainerConfig& config) {
  config.validate();
  TrainedModel m;
  m.config = config;
  m.spec = spec;
  m.head = lr_head_for(spec, config.lr_scale);
  m.theta = init_theta(spec, config.seed);
  if (uses_lr_head(config.algorithm)) m.psi = init_psi(m.head, config.seed);
  if (config.algorithm == Algorithm::MetaSgd)
    m.meta_sgd = Vec<double>::Constant(m.theta.total_dim(), config.fixed_inner_lr);
  if (config.algorithm == Algorithm::AtPaml) {
    memory::TreeConfig tc = config.tree;
    tc.forest.seed ^= config.seed;
    m.tree.emplace(spec.user_embedding_dim(), tc);
  }
  return m;
}

MetaTrainer::MetaTrainer(const ModelSpec& spec, const TrainerConfig& config)
    : MetaTrainer(init_model(spec, config)) {}

MetaTrainer::MetaTrainer(TrainedModel model) : model_(std::move(model)), rng_(model_.config.seed + 0x2545f491) {
  model_.config.validate();
}

bool MetaTrainer::in_warmup() const {
  return model_.config.algorithm == Algorithm::AtPaml && epoch_ < model_.config.warmup_epochs;
}

EpisodeSetup<double> MetaTrainer::setup(bool warmup) const {
  const TrainerConfig& c = model_.config;
  EpisodeSetup<double> s;
  s.algorithm = c.algorithm;
  s.spec = &model_.spec;
  s.head = &model_.head;
  s.fixed_alpha = warmup ? c.warmup_lr : c.fixed_inner_lr;
  s.gamma = c.gamma;
  s.warmup = warmup;
  s.delta = c.tree.delta;
  s.sigma = c.tree.sigma;
  return s;
}

StepLog MetaTrainer::outer_step(const std::vector<const tasks::TaskEpisode*>& batch) {
  if (batch.empty()) throw InputError("outer_step: empty batch");
  const TrainerConfig& c = model_.config;
  const bool warm = in_warmup();
  const bool has_psi = !model_.psi.empty() && !warm;
  const bool learn_psi = has_psi && !c.freeze_psi;
  const bool meta_sgd = c.algorithm == Algorithm::MetaSgd;
  memory::TreeMemory* tree = model_.tree ? &*model_.tree : nullptr;
  const bool lookup = tree && !warm && tree->size() > 0;

  StepLog log;
  log.epoch = epoch_;
  log.warmup = warm;
  log.gamma = c.algorithm == Algorithm::RegPaml ? c.gamma : 0.0;

  Vec<double> g_theta = Vec<double>::Zero(model_.theta.total_dim());
  Vec<double> g_psi = model_.psi.empty() ? Vec<double>() : Vec<double>::Zero(model_.psi.total_dim());
  Vec<double> g_psi_alpha = g_psi;
  Vec<double> g_rates = meta_sgd ? Vec<double>::Zero(model_.meta_sgd.size()) : Vec<double>();
  std::map<std::uint64_t, memory::NodeGradient> node_grads;

  for (const tasks::TaskEpisode* ep : batch) {
    const Batch support = tasks::support_batch(*ep);
    const Batch query = tasks::query_batch(*ep);
    EpisodeSetup<double> s = setup(warm);
    std::vector<memory::Hit> hits;
    if (lookup) {
      hits = tree->search(user_embedding(model_.theta, model_.spec, support.user), c.tree.k_train);
      for (const auto& hit : hits) {
        s.nodes.push_back(hit.embedding);
        s.node_lrs.push_back(hit.lr);
      }
    }
    EpisodeGradient eg = episode_gradient(model_.theta, model_.psi, model_.meta_sgd, support, query, s,
                                          c.psi_rule == PsiRule::Literal && learn_psi);
    eg.log.user_id = ep->user.user_id;
    g_theta += eg.theta.flat();
    if (has_psi) g_psi += eg.psi.flat();
    if (!eg.psi_alpha.empty()) g_psi_alpha += eg.psi_alpha.flat();
    if (meta_sgd) g_rates += eg.meta_sgd;
    for (std::size_t k = 0; k < eg.nodes.embeddings.size(); ++k) {
      auto [it, fresh] = node_grads.try_emplace(hits[k].id);
      if (fresh) {
        it->second.id = hits[k].id;
        it->second.embedding = Vec<double>::Zero(eg.nodes.embeddings[k].size());
      }
      it->second.embedding += eg.nodes.embeddings[k];
      it->second.lr += eg.nodes.lrs[k];
    }
    log.total += eg.log.objective;
    log.query_sum += eg.log.query_loss;
    log.reg_sum += eg.log.reg;
    log.users.push_back(std::move(eg.log));
  }

  // joint clipping over everything the optimizer will move
  double sq = g_theta.squaredNorm();
  if (learn_psi) sq += g_psi.squaredNorm();
  if (meta_sgd) sq += g_rates.squaredNorm();
  log.grad_norm = std::sqrt(sq);
  if (!std::isfinite(log.grad_norm))
    throw NumericError("non-finite outer gradient at epoch " + std::to_string(epoch_ + 1));
  if (c.clip_norm > 0 && log.grad_norm > c.clip_norm) {
    const double f = c.clip_norm / log.grad_norm;
    g_theta *= f;
    g_psi *= f;
    g_rates *= f;
    log.clipped = true;
  }

  const double beta = c.beta();
  auto apply = [&](Vec<double>& x, const Vec<double>& g, Adam& adam) {
    if (c.optimizer == Optimizer::Sgd)
      x -= beta * g;
    else
      x -= adam.step(g, beta);
  };
  apply(model_.theta.flat(), g_theta, adam_theta_);
  if (learn_psi) {
    if (c.psi_rule == PsiRule::Literal)
      model_.psi.flat() += beta * g_psi.cwiseProduct(g_psi_alpha);
    else
      apply(model_.psi.flat(), g_psi, adam_psi_);
  }
  if (meta_sgd) {
    apply(model_.meta_sgd, g_rates, adam_rates_);
    model_.meta_sgd = model_.meta_sgd.cwiseMax(0.0);
  }
  if (!model_.theta.all_finite() || (!model_.psi.empty() && !model_.psi.all_finite()))
    throw NumericError("non-finite parameters after outer step at epoch " + std::to_string(epoch_ + 1));

  if (tree) {
    if (!node_grads.empty()) {
      std::vector<memory::NodeGradient> grads;
      for (auto& [id, g] : node_grads) grads.push_back(std::move(g));
      tree->update_nodes(grads, beta);
    }
    for (const EpisodeLog& u : log.users) tree->store_node(u.embedding, u.alpha);
    tree->commit();
  }
  return log;
}

std::vector<StepLog> MetaTrainer::run_epoch(const std::vector<tasks::TaskEpisode>& train) {
  if (train.empty()) throw InputError("training split is empty");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng_);
  std::vector<StepLog> logs;
  const std::size_t bs = model_.config.batch_size;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    std::vector<const tasks::TaskEpisode*> batch;
    for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(&train[order[i]]);
    logs.push_back(outer_step(batch));
  }
  ++epoch_;
  return logs;
}

namespace {

double mean_query_loss(const std::vector<UserResult>& results) {
  if (results.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (const auto& r : results) s += r.query_loss;
  return s / static_cast<double>(results.size());
}

}  // namespace

TrainedModel train(const tasks::DatasetSplits& data, const ModelSpec& spec, const TrainerConfig& config,
                   const StepCallback& on_step) {
  if (data.train.empty()) throw InputError("training split is empty");
  MetaTrainer trainer(spec, config);
  std::vector<EpochRecord> history;
  std::optional<TrainedModel> best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < config.epochs; ++e) {
    EpochRecord rec;
    rec.epoch = e + 1;
    rec.warmup = trainer.in_warmup();
    const std::vector<StepLog> logs = trainer.run_epoch(data.train);
    std::size_t users = 0;
    for (const StepLog& l : logs) {
      rec.train_objective += l.total;
      users += l.users.size();
      if (on_step) on_step(l);
    }
    rec.train_objective /= static_cast<double>(users);
    rec.validation_loss = mean_query_loss(evaluate(trainer.model(), data.validation));
    history.push_back(rec);
    if (!data.validation.empty() && rec.validation_loss < best_loss) {
      best_loss = rec.validation_loss;
      best = trainer.model();
      best->best_epoch = rec.epoch;
    }
  }
  TrainedModel out = best ? std::move(*best) : trainer.model();
  if (!best) out.best_epoch = config.epochs;
  out.history = std::move(history);
  return out;
}

ParamSet<double> finetune(const ParamSet<double>& theta, const ModelSpec& spec, const Batch& support, double lr) {
  return inner_adapt(theta, spec, support, lr);
}

double evaluation_alpha(const TrainedModel& m, const Vec<double>& h) {
  switch (m.config.algorithm) {
    case Algorithm::MamlFixed: return m.config.fixed_inner_lr;
    case Algorithm::Transfer: return m.config.finetune_rate();
    case Algorithm::MetaSgd: return m.meta_sgd.mean();
    case Algorithm::Paml:
    case Algorithm::RegPaml: return lr_alpha(m.psi, m.head, h);
    case Algorithm::AtPaml: {
      const double ap = lr_alpha(m.psi, m.head, h);
      if (!m.tree || m.tree->size() == 0) return ap;
      std::optional<memory::TreeMemory> fresh;
      const memory::TreeMemory* tree = &*m.tree;
      if (tree->stale()) {
        fresh = *m.tree;
        fresh->commit();
        tree = &*fresh;
      }
      std::vector<memory::BlendInput> nb;
      for (const auto& hit : tree->query(h, m.config.tree.k_infer)) nb.push_back({hit.embedding, hit.lr});
      return compute_alpha(ap, memory::blend_forward(h, nb, m.config.tree.delta, m.config.tree.sigma).alpha_tilde);
    }
  }
  return 0;
}

std::vector<UserResult> evaluate(const TrainedModel& m, const std::vector<tasks::TaskEpisode>& episodes) {
  std::vector<UserResult> out;
  out.reserve(episodes.size());
  const LossKind kind = loss_kind_for(m.spec.output);
  for (const tasks::TaskEpisode& ep : episodes) {
    if (ep.query.empty()) {
      std::cerr << "warning: user " << ep.user.user_id << " has an empty query set; skipped\n";
      continue;
    }
    const Batch support = tasks::support_batch(ep);
    const Batch query = tasks::query_batch(ep);
    UserResult r;
    r.user_id = ep.user.user_id;
    r.embedding = user_embedding(m.theta, m.spec, support.user);
    r.alpha = evaluation_alpha(m, r.embedding);
    ParamSet<double> adapted = m.theta;
    if (!support.items.empty()) {
      if (m.config.algorithm == Algorithm::MetaSgd)
        adapted = inner_adapt(m.theta, m.spec, support, m.meta_sgd);
      else
        adapted = inner_adapt(m.theta, m.spec, support, r.alpha);
    }
    r.outputs = forward(adapted, m.spec, query).values;
    r.targets = query.targets;
    const Index row = m.spec.output == OutputKind::Rating ? 0 : 1;
    r.scores.assign(r.outputs.row(row).begin(), r.outputs.row(row).end());
    r.query_loss = loss<double>(r.outputs, r.targets, kind, m.spec.nel_weights);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace paml::meta
