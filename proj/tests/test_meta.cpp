#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "paml/meta/checkpoint.hpp"
#include "paml/meta/episode.hpp"
#include "paml/meta/trainer.hpp"

using namespace paml;
using namespace paml::meta;
using testing::rel_err;

namespace {

struct Draw {
  ModelSpec spec;
  LrHeadSpec head;
  ParamSet<double> theta, psi;
  Vec<double> rates;
  Batch support, query;
};

Draw make_draw(std::uint64_t seed, OutputKind out = OutputKind::Rating) {
  Draw d;
  d.spec = testing::tiny_spec(out);
  d.head = lr_head_for(d.spec, 0.1);
  d.theta = testing::random_theta(d.spec, seed, 0.6);
  d.psi = init_psi(d.head, seed);
  std::mt19937_64 rng(seed * 31 + 1);
  std::uniform_real_distribution<double> u(0.01, 0.2);
  d.rates = Vec<double>::NullaryExpr(d.theta.total_dim(), [&] { return u(rng); });
  d.support = testing::random_batch(d.spec, rng, 3);
  d.query = testing::random_batch(d.spec, rng, 2);
  d.query.user = d.support.user;
  return d;
}

EpisodeSetup<double> setup_for(const Draw& d, Algorithm a) {
  EpisodeSetup<double> s;
  s.algorithm = a;
  s.spec = &d.spec;
  s.head = &d.head;
  s.fixed_alpha = 0.05;
  s.gamma = 0.3;
  s.delta = 2.0;
  s.sigma = 1e-5;
  return s;
}

// Worst component-wise relative error of the exact episode gradient against
// central differences of episode_objective in long double.
double fd_error(const Draw& d, const EpisodeSetup<double>& s) {
  const EpisodeGradient g = episode_gradient(d.theta, d.psi, d.rates, d.support, d.query, s);
  const auto sl = testing::cast_setup<long double>(s);
  const ParamSet<long double> th = d.theta.cast<long double>();
  const ParamSet<long double> ps = d.psi.empty() ? ParamSet<long double>() : d.psi.cast<long double>();
  const Vec<long double> rt = d.rates.cast<long double>();
  const long double h = 1e-6L;
  double worst = 0;
  auto f_theta = [&](const Vec<long double>& x) {
    return episode_objective(ParamSet<long double>(th.layout(), x), ps, rt, d.support, d.query, sl);
  };
  const Eigen::VectorXd ft = testing::fd_gradient(f_theta, th.flat(), h);
  for (Index i = 0; i < ft.size(); ++i) worst = std::max(worst, rel_err(g.theta.flat()(i), ft(i), 1e-9));
  if (!g.psi.empty()) {
    auto f_psi = [&](const Vec<long double>& x) {
      return episode_objective(th, ParamSet<long double>(ps.layout(), x), rt, d.support, d.query, sl);
    };
    const Eigen::VectorXd fp = testing::fd_gradient(f_psi, ps.flat(), h);
    for (Index i = 0; i < fp.size(); ++i) worst = std::max(worst, rel_err(g.psi.flat()(i), fp(i), 1e-9));
  }
  if (g.meta_sgd.size()) {
    auto f_rates = [&](const Vec<long double>& x) { return episode_objective(th, ps, x, d.support, d.query, sl); };
    const Eigen::VectorXd fr = testing::fd_gradient(f_rates, rt, h);
    for (Index i = 0; i < fr.size(); ++i) worst = std::max(worst, rel_err(g.meta_sgd(i), fr(i), 1e-9));
  }
  return worst;
}

TrainerConfig sgd_config(Algorithm a, std::uint64_t seed = 3) {
  TrainerConfig c;
  c.algorithm = a;
  c.seed = seed;
  c.epochs = 2;
  c.batch_size = 8;
  c.outer_lr = 1e-2;
  c.optimizer = Optimizer::Sgd;
  return c;
}

}  // namespace

TEST_CASE("inner_adapt: examples") {
  ModelSpec s;
  s.user_vocab = {1};
  s.item_vocab = {1};
  s.embedding_dim = 1;
  s.decision_dims = {};
  ParamSet<double> th(make_theta_layout(s));
  Batch b;
  b.user = {{0}};
  b.items = {{{0}}};
  b.targets = {1.0};
  // L = (theta - 1)^2 in the output bias
  CHECK(inner_adapt(th, s, b, 0.1)["out/b"](0, 0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(inner_adapt(th, s, b, 0.0).flat() == th.flat());
  b.targets = {0.0};
  CHECK(inner_adapt(th, s, b, 0.5).flat() == th.flat());  // zero gradient
  CHECK_THROWS_AS(inner_adapt(th, s, b, -0.1), NumericError);
  CHECK_THROWS_AS(inner_adapt(th, s, b, std::nan("")), NumericError);

  // reg_term: |grad| = 2 with alpha = 1e-3 gives 4e-3
  b.targets = {1.0};
  CHECK(reg_term(th, s, b, 1e-3) == doctest::Approx(4e-3).epsilon(1e-15));
  CHECK(reg_term(th, s, b, 0.0) == 0.0);
  b.targets = {0.0};
  CHECK(reg_term(th, s, b, 1e-3) == 0.0);
}

TEST_CASE("compute_alpha and the learning-rate head") {
  CHECK(compute_alpha(5e-4, 2e-3) == doctest::Approx(2.5e-3).epsilon(1e-15));
  CHECK(compute_alpha(5e-4) == 5e-4);
  const ModelSpec s = testing::tiny_spec();
  const LrHeadSpec head = lr_head_for(s);
  ParamSet<double> psi = init_psi(head, 4);
  psi["lr/out/W"].setZero();
  psi["lr/out/b"].setZero();
  const Vec<double> h = Vec<double>::Constant(2, 0.7);
  CHECK(lr_alpha(psi, head, h) == doctest::Approx(5e-4).epsilon(1e-15));
  // alpha' stays inside (0, scale)
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 3);
  for (int i = 0; i < 200; ++i) {
    const ParamSet<double> p = init_psi(head, rng());
    const Vec<double> x = Vec<double>::NullaryExpr(2, [&] { return n(rng); });
    const double a = lr_alpha(p, head, x);
    CHECK(a > 0);
    CHECK(a < head.scale);
  }
  CHECK_THROWS_AS(lr_alpha(psi, head, Vec<double>(Vec<double>::Zero(3))), InputError);
  // hidden activations: ReLU between hidden layers, linear into the output
  CHECK(head.relu_after(0));
  CHECK_FALSE(head.relu_after(1));
  LrHeadSpec all = head;
  all.relu_last_hidden = true;
  CHECK(all.relu_after(1));
}

TEST_CASE("episode gradient: alpha = 0 reduces to the plain query gradient") {
  const Draw d = make_draw(7);
  EpisodeSetup<double> s = setup_for(d, Algorithm::MamlFixed);
  s.fixed_alpha = 0.0;
  const EpisodeGradient g = episode_gradient(d.theta, ParamSet<double>(), Vec<double>(), d.support, d.query, s);
  CHECK(g.theta.flat() == grad(d.theta, d.spec, d.query).params.flat());
}

TEST_CASE("episode gradient: matches finite differences for every algorithm") {
  for (Algorithm a : {Algorithm::Paml, Algorithm::RegPaml, Algorithm::AtPaml, Algorithm::MamlFixed,
                      Algorithm::MetaSgd, Algorithm::Transfer}) {
    CAPTURE(to_string(a));
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      Draw d = make_draw(100 + seed, seed % 2 ? OutputKind::Ctr : OutputKind::Rating);
      if (!uses_lr_head(a)) d.psi = ParamSet<double>();
      if (a != Algorithm::MetaSgd) d.rates = Vec<double>();
      EpisodeSetup<double> s = setup_for(d, a);
      if (a == Algorithm::AtPaml) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0, 0.4);
        const Vec<double> h = user_embedding(d.theta, d.spec, d.support.user);
        for (int k = 0; k < 3; ++k) {
          s.nodes.push_back(h + Vec<double>::NullaryExpr(h.size(), [&] { return n(rng); }));
          s.node_lrs.push_back(0.02 * (k + 1));
        }
      }
      CHECK(fd_error(d, s) < 1e-4);
    }
  }
}

TEST_CASE("episode gradient: at-paml node gradients match finite differences") {
  const Draw d = make_draw(41);
  EpisodeSetup<double> s = setup_for(d, Algorithm::AtPaml);
  const Vec<double> h = user_embedding(d.theta, d.spec, d.support.user);
  s.nodes = {h + Vec<double>::Constant(2, 0.2), h - Vec<double>::Constant(2, 0.3)};
  s.node_lrs = {0.03, 0.01};
  const EpisodeGradient g = episode_gradient(d.theta, d.psi, d.rates, d.support, d.query, s);
  REQUIRE(g.nodes.embeddings.size() == 2);
  const long double eps = 1e-6L;
  const ParamSet<long double> th = d.theta.cast<long double>(), ps = d.psi.cast<long double>();
  const Vec<long double> rt;
  auto f = [&](const EpisodeSetup<double>& x) {
    return episode_objective(th, ps, rt, d.support, d.query, testing::cast_setup<long double>(x));
  };
  for (std::size_t k = 0; k < 2; ++k) {
    for (Index i = 0; i < 2; ++i) {
      EpisodeSetup<double> p = s, m = s;
      p.nodes[k](i) += static_cast<double>(eps);
      m.nodes[k](i) -= static_cast<double>(eps);
      CHECK(rel_err(g.nodes.embeddings[k](i), static_cast<double>((f(p) - f(m)) / (2 * eps)), 1e-9) < 1e-4);
    }
    EpisodeSetup<double> p = s, m = s;
    p.node_lrs[k] += static_cast<double>(eps);
    m.node_lrs[k] -= static_cast<double>(eps);
    CHECK(rel_err(g.nodes.lrs[k], static_cast<double>((f(p) - f(m)) / (2 * eps)), 1e-9) < 1e-4);
  }
}

TEST_CASE("episode gradient: logged objective is query loss plus gamma times the regulariser") {
  const Draw d = make_draw(9);
  const EpisodeSetup<double> s = setup_for(d, Algorithm::RegPaml);
  const EpisodeGradient g = episode_gradient(d.theta, d.psi, d.rates, d.support, d.query, s);
  CHECK(g.log.objective == g.log.query_loss + s.gamma * g.log.reg);
  CHECK(rel_err(g.log.reg, reg_term(d.theta, d.spec, d.support, g.log.alpha)) < 1e-14);
  CHECK(rel_err(g.log.objective, episode_objective(d.theta, d.psi, d.rates, d.support, d.query, s)) < 1e-14);
}

TEST_CASE("outer step: beta = 0 leaves the parameters unchanged") {
  testing::SyntheticFixture fx(20);
  for (Algorithm a : {Algorithm::Paml, Algorithm::AtPaml, Algorithm::MetaSgd}) {
    TrainerConfig c = sgd_config(a);
    c.outer_lr = 0.0;
    c.warmup_epochs = 0;
    MetaTrainer t(fx.spec, c);
    const TrainedModel before = t.model();
    t.outer_step({&fx.data.train[0]});
    t.outer_step({&fx.data.train[1]});  // at-paml: second step searches the tree
    CHECK(t.model().theta.flat() == before.theta.flat());
    CHECK(t.model().psi.flat() == before.psi.flat());
    CHECK(t.model().meta_sgd == before.meta_sgd);
  }
}

TEST_CASE("outer step: alpha = 0 gives a plain multi-task gradient step") {
  testing::SyntheticFixture fx(20);
  TrainerConfig c = sgd_config(Algorithm::MetaSgd);
  c.clip_norm = 0;
  MetaTrainer t(fx.spec, c);
  t.model().meta_sgd.setZero();
  const ParamSet<double> th = t.model().theta;
  const std::vector<const tasks::TaskEpisode*> batch{&fx.data.train[0], &fx.data.train[1]};
  t.outer_step(batch);
  Vec<double> g = Vec<double>::Zero(th.total_dim());
  for (auto* ep : batch) g += grad(th, fx.spec, tasks::query_batch(*ep)).params.flat();
  CHECK((t.model().theta.flat() - (th.flat() - 1e-2 * g)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("outer step: joint clipping") {
  testing::SyntheticFixture fx(20);
  TrainerConfig c = sgd_config(Algorithm::Paml);
  c.clip_norm = 1e-6;
  MetaTrainer t(fx.spec, c);
  const TrainedModel before = t.model();
  const StepLog log = t.outer_step({&fx.data.train[0], &fx.data.train[1]});
  CHECK(log.clipped);
  const double moved = std::hypot((t.model().theta.flat() - before.theta.flat()).norm(),
                                  (t.model().psi.flat() - before.psi.flat()).norm());
  CHECK(moved == doctest::Approx(1e-2 * 1e-6).epsilon(1e-9));
}

TEST_CASE("frozen constant head reproduces fixed-rate MAML bit for bit") {
  testing::SyntheticFixture fx(80);
  for (Optimizer opt : {Optimizer::Sgd, Optimizer::Adam}) {
    TrainerConfig pc = sgd_config(Algorithm::Paml);
    pc.optimizer = opt;
    pc.freeze_psi = true;
    pc.outer_lr = 1e-3;
    TrainedModel pm = init_model(fx.spec, pc);
    pm.psi["lr/out/W"].setZero();
    pm.psi["lr/out/b"](0, 0) = -1.3;
    const double alpha = lr_alpha(pm.psi, pm.head, Vec<double>(Vec<double>::Zero(pm.head.input_dim)));

    TrainerConfig mc = pc;
    mc.algorithm = Algorithm::MamlFixed;
    mc.freeze_psi = false;
    mc.fixed_inner_lr = alpha;
    MetaTrainer paml(std::move(pm)), maml(fx.spec, mc);
    REQUIRE(paml.model().theta.flat() == maml.model().theta.flat());
    for (int e = 0; e < 3; ++e) {
      const auto lp = paml.run_epoch(fx.data.train);
      const auto lm = maml.run_epoch(fx.data.train);
      REQUIRE(lp.size() == lm.size());
      for (std::size_t i = 0; i < lp.size(); ++i) CHECK(lp[i].total == lm[i].total);
    }
    CHECK(paml.model().theta.flat() == maml.model().theta.flat());
  }
}

TEST_CASE("at-paml: warm-up stores one node per user, capped at capacity") {
  testing::SyntheticFixture fx(60);
  TrainerConfig c = sgd_config(Algorithm::AtPaml);
  c.tree.mode = memory::SearchMode::Exact;
  MetaTrainer t(fx.spec, c);
  CHECK(t.in_warmup());
  t.run_epoch(fx.data.train);
  CHECK(t.model().tree->size() == fx.data.train.size());
  CHECK_FALSE(t.in_warmup());
  // after warm-up nodes are searched, updated and stored
  const auto logs = t.run_epoch(fx.data.train);
  CHECK(t.model().tree->size() == 2 * fx.data.train.size());
  for (const auto& l : logs)
    for (const auto& u : l.users) {
      CHECK(u.alpha_tilde > 0);
      CHECK(u.alpha == doctest::Approx(u.alpha_prime + u.alpha_tilde).epsilon(1e-15));
    }

  c.tree.capacity = 10;
  MetaTrainer capped(fx.spec, c);
  capped.run_epoch(fx.data.train);
  CHECK(capped.model().tree->size() == 10);
  CHECK(capped.model().tree->evictions() == fx.data.train.size() - 10);
}

TEST_CASE("transfer: pooled loss decreases over the first epochs") {
  testing::SyntheticFixture fx(200, 8, 3.0, 4.0);
  TrainerConfig c = sgd_config(Algorithm::Transfer);
  c.outer_lr = 1e-3;
  c.optimizer = Optimizer::Adam;
  MetaTrainer t(fx.spec, c);
  std::vector<double> losses;
  for (int e = 0; e < 6; ++e) {
    double total = 0;
    for (const auto& l : t.run_epoch(fx.data.train)) total += l.total;
    losses.push_back(total);
  }
  int rises = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) rises += losses[i] >= losses[i - 1];
  CHECK(rises <= 1);
  CHECK(losses.back() < losses.front());

  // a single-user pool is plain gradient descent on that user
  TrainerConfig sc = sgd_config(Algorithm::Transfer);
  sc.clip_norm = 0;
  MetaTrainer one(fx.spec, sc);
  const ParamSet<double> th = one.model().theta;
  const tasks::TaskEpisode& ep = fx.data.train[0];
  one.run_epoch({ep});
  Batch all = tasks::support_batch(ep);
  const Batch q = tasks::query_batch(ep);
  all.items.insert(all.items.end(), q.items.begin(), q.items.end());
  all.targets.insert(all.targets.end(), q.targets.begin(), q.targets.end());
  CHECK(one.model().theta.flat() == axpy_update(th, grad(th, fx.spec, all).params, 1e-2).flat());

  CHECK(finetune(th, fx.spec, tasks::support_batch(ep), 0.0).flat() == th.flat());
}

TEST_CASE("train: zero epochs, history length and determinism") {
  testing::SyntheticFixture fx(60);
  TrainerConfig c = sgd_config(Algorithm::RegPaml);
  c.epochs = 0;
  const TrainedModel z = train(fx.data, fx.spec, c);
  CHECK(z.history.empty());
  CHECK(z.theta.flat() == init_model(fx.spec, c).theta.flat());

  c.epochs = 3;
  const TrainedModel a = train(fx.data, fx.spec, c), b = train(fx.data, fx.spec, c);
  CHECK(a.history.size() == 3);
  CHECK(a.best_epoch >= 1);
  CHECK(a.history[a.best_epoch - 1].validation_loss ==
        std::min({a.history[0].validation_loss, a.history[1].validation_loss, a.history[2].validation_loss}));
  CHECK(a.theta.flat() == b.theta.flat());
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.history[i].train_objective == b.history[i].train_objective);

  tasks::DatasetSplits empty = fx.data;
  empty.train.clear();
  CHECK_THROWS_AS(train(empty, fx.spec, c), InputError);
}

TEST_CASE("evaluate: rates per algorithm and read-only behaviour") {
  testing::SyntheticFixture fx(60);
  TrainerConfig mc = sgd_config(Algorithm::MamlFixed);
  const TrainedModel maml = init_model(fx.spec, mc);
  for (const auto& r : evaluate(maml, fx.data.test)) CHECK(r.alpha == 1e-5);

  TrainerConfig sc = sgd_config(Algorithm::MetaSgd);
  TrainedModel msgd = init_model(fx.spec, sc);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 0.05);
  for (Index i = 0; i < msgd.meta_sgd.size(); ++i) msgd.meta_sgd(i) = u(rng);
  const auto& ep = fx.data.test[0];
  const ParamSet<double> adapted = inner_adapt(msgd.theta, fx.spec, tasks::support_batch(ep), msgd.meta_sgd);
  CHECK(evaluate(msgd, {ep})[0].outputs == forward(adapted, fx.spec, tasks::query_batch(ep)).values);

  TrainerConfig ac = sgd_config(Algorithm::AtPaml);
  MetaTrainer at(fx.spec, ac);
  at.run_epoch(fx.data.train);
  const memory::TreeMemory before = *at.model().tree;
  const auto r1 = evaluate(at.model(), fx.data.test);
  const auto r2 = evaluate(at.model(), fx.data.test);
  CHECK(*at.model().tree == before);
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].outputs == r2[i].outputs);
    CHECK(r1[i].alpha > 0);
  }
}

TEST_CASE("trainer config validation") {
  TrainerConfig c;
  CHECK(c.beta() == 5e-6);
  c.algorithm = Algorithm::RegPaml;
  CHECK(c.beta() == 5e-5);
  c.fixed_inner_lr = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c.fixed_inner_lr = 1e-5;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c.batch_size = 32;
  c.outer_lr = -1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  CHECK_THROWS_AS(parse_algorithm("maml"), InputError);
  CHECK(parse_algorithm("at-paml") == Algorithm::AtPaml);
}

TEST_CASE("checkpoint: round trip is bit exact") {
  testing::SyntheticFixture fx(40);
  testing::TempDir dir("ckpt");
  for (Algorithm a : {Algorithm::RegPaml, Algorithm::MetaSgd, Algorithm::MamlFixed}) {
    TrainerConfig c = sgd_config(a);
    MetaTrainer t(fx.spec, c);
    t.run_epoch(fx.data.train);
    save_checkpoint(t.model(), dir.path / "m.ckpt", 0xfeedULL);
    TrainedModel fresh = init_model(fx.spec, c);
    CHECK(load_checkpoint(dir.path / "m.ckpt", fresh) == 0xfeedULL);
    CHECK(fresh.theta.flat() == t.model().theta.flat());
    CHECK(fresh.psi.flat() == t.model().psi.flat());
    CHECK(fresh.meta_sgd == t.model().meta_sgd);
  }
  TrainedModel other = init_model(testing::tiny_spec(), sgd_config(Algorithm::RegPaml));
  CHECK_THROWS(load_checkpoint(dir.path / "m.ckpt", other));
}
