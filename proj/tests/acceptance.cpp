// Acceptance suite: one PASS/FAIL/SKIP line per criterion, details indented below.
// Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "paml/cli/experiment.hpp"
#include "paml/eval/metrics.hpp"
#include "paml/lemma/two_group.hpp"
#include "paml/memory/kd_tree.hpp"
#include "paml/meta/trainer.hpp"
#include "ttest_goldens.hpp"

using namespace paml;
using nlohmann::json;

namespace {

// tolerances and limits
constexpr double kClosedFormTol = 1e-8;
constexpr double kLemmaSlack = 1e-10;
constexpr double kFdTol = 1e-4;
constexpr double kRecallTarget = 0.9;
constexpr double kTotalMseSlack = 1.05;
constexpr double kMetricTol = 1e-6;
constexpr double kAccountingTol = 1e-10;

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Pass;
  std::vector<std::string> details;

  void require(bool ok) {
    if (!ok) status = Status::Fail;
  }
  template <class... A>
  void note(const char* fmt, A... args) {
    if constexpr (sizeof...(A) == 0) {
      details.emplace_back(fmt);
    } else {
      char buf[512];
      std::snprintf(buf, sizeof buf, fmt, args...);
      details.emplace_back(buf);
    }
  }
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::filesystem::path& scratch() {
  static const std::filesystem::path dir = [] {
    auto d = std::filesystem::temp_directory_path() / ("paml-acceptance-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

// ---------------------------------------------------------------------------

Outcome lemma_suite() {
  Outcome o;
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> p(0.5, 0.99), gap(0.1, 5), a(0, 0.2), x(-3, 3);
  std::size_t closed = 0, lemma1 = 0, equalizing = 0, balanced = 0, minor = 0;
  double worst = 0, worst_p1_ok = 1;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    lemma::TwoGroupSpec s;
    s.p1 = p(rng);
    s.p2 = 1 - s.p1;
    s.x1 = x(rng);
    s.x2 = s.x1 + gap(rng);
    s.alpha = a(rng);
    const lemma::LemmaReport r = lemma::verify_lemmas(s, kLemmaSlack);
    worst = std::max(worst, r.closed_form_error);
    closed += r.closed_form_error < kClosedFormTol;
    lemma1 += r.lemma1_holds;
    minor += r.minor_improves;
    if (r.L_star_prime <= r.L_star + kLemmaSlack)
      ++equalizing;
    else
      worst_p1_ok = std::min(worst_p1_ok, s.p1);
    s.alpha2 = lemma::alpha2_descent_balanced(s.alpha, s.p1, s.p2);
    const lemma::LemmaReport b = lemma::verify_lemmas(s, kLemmaSlack);
    balanced += b.L_star_prime <= b.L_star + kLemmaSlack && b.group2_loss_prime <= b.group2_loss + kLemmaSlack;
  }
  o.require(closed == n);
  o.require(lemma1 == n);
  o.require(equalizing == n);
  o.note("closed form vs numeric: %zu/%d within %.0e (worst %.2e)", closed, n, kClosedFormTol, worst);
  o.note("per-group loss ordering: %zu/%d", lemma1, n);
  o.note("equalizing rate, L*' <= L* + %.0e: %zu/%d", kLemmaSlack, equalizing, n);
  if (equalizing < n) o.note("  lowest violating p1 = %.4f (the equalizing rate passes 1/2 under the descent step)", worst_p1_ok);
  o.note("equalizing rate, minor-group loss improves: %zu/%d", minor, n);
  o.note("info: descent-balanced rate, minor and total improve: %zu/%d", balanced, n);
  return o;
}

// ---------------------------------------------------------------------------

Outcome meta_gradient() {
  Outcome o;
  const int draws = 50;
  double worst = 0;
  Index params = 0;
  for (int d = 0; d < draws; ++d) {
    const auto seed = static_cast<std::uint64_t>(d);
    const ModelSpec spec = testing::tiny_spec(OutputKind::Rating);
    meta::TrainerConfig cfg;
    cfg.algorithm = d % 2 ? meta::Algorithm::RegPaml : meta::Algorithm::Paml;
    cfg.optimizer = meta::Optimizer::Sgd;
    cfg.outer_lr = 1.0;
    cfg.clip_norm = 0;
    cfg.lr_scale = 0.1;
    cfg.gamma = 0.3;
    cfg.seed = seed;
    meta::MetaTrainer trainer(spec, cfg);
    trainer.model().theta = testing::random_theta(spec, seed, 0.6);
    const ParamSet<double> theta = trainer.model().theta, psi = trainer.model().psi;
    params = theta.total_dim() + psi.total_dim();

    std::mt19937_64 rng(seed * 131 + 5);
    const Batch s = testing::random_batch(spec, rng, 3), q = testing::random_batch(spec, rng, 2);
    tasks::TaskEpisode ep;
    ep.user.user_id = d;
    ep.user.features = s.user;
    for (std::size_t j = 0; j < s.items.size(); ++j) ep.support.push_back({static_cast<int>(j), s.items[j], s.targets[j], {}});
    for (std::size_t j = 0; j < q.items.size(); ++j) ep.query.push_back({static_cast<int>(j), q.items[j], q.targets[j], {}});
    trainer.outer_step({&ep});
    // SGD with unit step: the update is exactly the negative gradient
    const Vec<double> g_theta = theta.flat() - trainer.model().theta.flat();
    const Vec<double> g_psi = psi.flat() - trainer.model().psi.flat();

    meta::EpisodeSetup<long double> setup;
    setup.algorithm = cfg.algorithm;
    setup.spec = &spec;
    setup.head = &trainer.model().head;
    setup.gamma = cfg.gamma;
    const Batch sb = tasks::support_batch(ep), qb = tasks::query_batch(ep);
    const ParamSet<long double> th = theta.cast<long double>(), ps = psi.cast<long double>();
    const Vec<long double> none;
    const long double h = 1e-6L;
    auto f_theta = [&](const Vec<long double>& v) {
      return meta::episode_objective(ParamSet<long double>(th.layout(), v), ps, none, sb, qb, setup);
    };
    auto f_psi = [&](const Vec<long double>& v) {
      return meta::episode_objective(th, ParamSet<long double>(ps.layout(), v), none, sb, qb, setup);
    };
    const Eigen::VectorXd ft = testing::fd_gradient(f_theta, th.flat(), h);
    const Eigen::VectorXd fp = testing::fd_gradient(f_psi, ps.flat(), h);
    for (Index i = 0; i < ft.size(); ++i) worst = std::max(worst, testing::rel_err(g_theta(i), ft(i), 1e-9));
    for (Index i = 0; i < fp.size(); ++i) worst = std::max(worst, testing::rel_err(g_psi(i), fp(i), 1e-9));
  }
  o.require(params <= 50);
  o.require(worst < kFdTol);
  o.note("%d draws (paml and reg-paml), %ld parameters (theta + psi)", draws, static_cast<long>(params));
  o.note("max relative error of the outer update vs central differences: %.3e (limit %.0e)", worst, kFdTol);
  return o;
}

// ---------------------------------------------------------------------------

Outcome knn() {
  Outcome o;
  std::mt19937_64 rng(3003);
  std::uniform_real_distribution<double> u(0, 1);
  auto points = [&](Index dim, Index n) {
    Eigen::MatrixXd p(dim, n);
    for (Index k = 0; k < p.size(); ++k) p.data()[k] = u(rng);
    return p;
  };
  int exact_ok = 0;
  std::size_t found = 0, wanted = 0;
  const int cases = 200;
  for (int c = 0; c < cases; ++c) {
    const auto dim = static_cast<Index>(2 + rng() % 15);
    const auto n = static_cast<Index>(50 + rng() % 951);
    const std::size_t k = 1 + rng() % 20;
    const Eigen::MatrixXd pts = points(dim, n);
    const Eigen::VectorXd query = points(dim, 1).col(0);
    const auto truth = memory::brute_force_knn(pts, query, k);
    exact_ok += memory::KdTree(pts).knn(query, k) == truth;
    memory::ForestParams fp;
    fp.seed = static_cast<std::uint64_t>(c);
    const auto approx = memory::RandomizedKdForest(pts, fp).knn(query, k);
    std::set<std::size_t> ids;
    for (const auto& t : truth) ids.insert(t.index);
    for (const auto& a : approx) found += ids.count(a.index);
    wanted += truth.size();
  }
  const double mixed = static_cast<double>(found) / static_cast<double>(wanted);
  o.require(exact_ok == cases);
  o.note("exact tree == brute force: %d/%d (dims 2-16, 50-1000 uniform points, K 1-20)", exact_ok, cases);

  // recall on 500 uniform 8-d points, 100 queries, at the memory's inference and training K
  const memory::ForestParams def;
  const memory::TreeConfig tc;
  const Eigen::MatrixXd pts = points(8, 500);
  const memory::RandomizedKdForest forest(pts, def);
  std::vector<Eigen::VectorXd> queries;
  for (int q = 0; q < 100; ++q) queries.push_back(points(8, 1).col(0));
  for (const std::size_t k : {tc.k_infer, tc.k_train}) {
    std::size_t hit = 0;
    for (const auto& query : queries) {
      std::set<std::size_t> ids;
      for (const auto& t : memory::brute_force_knn(pts, query, k)) ids.insert(t.index);
      for (const auto& a : forest.knn(query, k)) hit += ids.count(a.index);
    }
    const double recall = static_cast<double>(hit) / static_cast<double>(k * queries.size());
    o.require(recall >= kRecallTarget);
    o.note("forest recall@%zu, 500 8-d points, %d trees, %d checks: %.4f (target %.2f)", k, def.trees, def.checks,
           recall, kRecallTarget);
  }
  o.note("info: forest recall@K over the 200 mixed cases: %.4f", mixed);
  return o;
}

// ---------------------------------------------------------------------------

json imbalance_config(const std::filesystem::path& out) {
  return json{{"dataset", {{"kind", "synthetic"}, {"p1", 0.8}, {"n_tasks", 2000}, {"noise_sd", 0.1}}},
              {"algorithms", {"reg-paml", "paml", "maml-fixed"}},
              {"model", {{"embedding_dim", 4}, {"decision_dims", {8}}, {"lr_dims", {6, 4, 1}}, {"user_in_decision", false}}},
              {"trainer",
               {{"epochs", 20},
                {"batch_size", 32},
                {"outer_lr", 1e-3},
                {"fixed_inner_lr", 0.05},
                {"lr_scale", 0.2},
                {"gamma", 1e-3}}},
              {"trials", 3},
              {"seeds", {0, 1, 2}},
              {"output_dir", out.string()},
              {"emit", {{"checkpoint", false}}}};
}

const eval::MetricSummary& summary(const eval::MetricsReport& r, const std::string& metric) {
  for (const auto& s : r.summaries)
    if (s.metric == metric) return s;
  throw std::runtime_error("report " + r.label + " has no " + metric);
}

Outcome imbalance() {
  Outcome o;
  std::ostringstream log;
  const auto res = cli::run_experiment(cli::parse_config(imbalance_config(scratch() / "imbalance-a")), log);
  const auto& reg = summary(res.reports[0], "mse");
  const auto& paml = summary(res.reports[1], "mse");
  const auto& maml = summary(res.reports[2], "mse");
  o.require(reg.minor.mean < maml.minor.mean);
  o.require(paml.minor.mean < maml.minor.mean);
  o.require(reg.all.mean <= kTotalMseSlack * maml.all.mean);
  o.require(paml.all.mean <= kTotalMseSlack * maml.all.mean);
  for (const auto* s : {&reg, &paml, &maml}) {
    const char* name = s == &reg ? "reg-paml" : s == &paml ? "paml" : "maml-fixed";
    o.note("%-10s total %.6f  major %.6f  minor %.6f", name, s->all.mean, s->major.mean, s->minor.mean);
  }
  o.note("minor gap to maml-fixed: reg-paml %.2e, paml %.2e", maml.minor.mean - reg.minor.mean,
         maml.minor.mean - paml.minor.mean);
  return o;
}

// ---------------------------------------------------------------------------

Outcome metric_goldens() {
  Outcome o;
  int ok = 0, total = 0;
  auto check = [&](const char* what, double got, double want) {
    ++total;
    const bool good = std::abs(got - want) <= kMetricTol;
    ok += good;
    if (!good) o.note("mismatch %s: got %.12g want %.12g", what, got, want);
  };
  const std::vector<double> pm{1, -1};
  check("mse (1,-1)", eval::mse(pm), 1.0);
  check("mse aggregate", eval::mse({{1.0}, {std::sqrt(3.0), std::sqrt(3.0), std::sqrt(3.0)}}).mean, 2.0);
  const std::vector<double> r{1, 5}, s{0.9, 0.1};
  check("ndcg (1,5)", eval::ndcg_at_k(r, s, 2), (1 + 31 / std::log2(3.0)) / (31 + 1 / std::log2(3.0)));
  const std::vector<double> l{1, 0, 1, 0}, sc{0.9, 0.8, 0.7, 0.1};
  check("auc", eval::auc(l, sc), 0.75);
  const std::vector<double> click{1}, pe{std::exp(-1.0)};
  check("nel", eval::weighted_nel(click, pe), 0.9);
  const std::vector<double> a{1, 2, 3, 4}, b{10, 11, 12, 13};
  const auto tt = eval::t_test_two_sample(a, b);
  check("t-test t", tt.t, -9.859006035092989);
  check("t-test p", tt.p, 6.280125725146634e-05);
  double worst = 0;
  for (const auto& g : testing::ttest_goldens()) {
    const auto t = eval::t_test_two_sample(g.a, g.b);
    worst = std::max(worst, std::abs(t.p - g.p));
    check("reference p", t.p, g.p);
  }
  o.require(ok == total);
  o.note("%d/%d values within %.0e", ok, total, kMetricTol);
  o.note("20 reference p-values, worst abs error %.2e", worst);
  o.note("info: (1,2,3,4) vs (10..13) gives p = %.4e", tt.p);
  return o;
}

// ---------------------------------------------------------------------------

Outcome movielens() {
  Outcome o;
  const char* root = std::getenv("PAML_MOVIELENS_DIR");
  if (!root || !std::filesystem::exists(std::filesystem::path(root) / "ratings.dat")) {
    o.status = Status::Skip;
    o.note("set PAML_MOVIELENS_DIR to a MovieLens-1M directory (ratings.dat, users.dat, movies.dat)");
    return o;
  }
  const std::filesystem::path dir(root);
  json j{{"dataset",
          {{"kind", "movielens"},
           {"ratings", (dir / "ratings.dat").string()},
           {"users", (dir / "users.dat").string()},
           {"movies", (dir / "movies.dat").string()},
           {"max_users", 500}}},
         {"algorithms", {"reg-paml", "maml-fixed"}},
         {"trainer", {{"epochs", 20}}},
         {"trials", 3},
         {"seeds", {0, 1, 2}},
         {"output_dir", (scratch() / "movielens").string()},
         {"emit", {{"checkpoint", false}}}};
  std::ostringstream log;
  const auto res = cli::run_experiment(cli::parse_config(j), log);
  const auto& reg = summary(res.reports[0], "mse");
  const auto& maml = summary(res.reports[1], "mse");
  o.require(reg.all.mean <= maml.all.mean);
  o.require(reg.minor.mean - reg.major.mean <= maml.minor.mean - maml.major.mean);
  o.note("reg-paml   total %.4f  minor-major %.4f", reg.all.mean, reg.minor.mean - reg.major.mean);
  o.note("maml-fixed total %.4f  minor-major %.4f", maml.all.mean, maml.minor.mean - maml.major.mean);
  return o;
}

// ---------------------------------------------------------------------------

Outcome accounting() {
  Outcome o;
  testing::SyntheticFixture fx(200, 7);
  meta::TrainerConfig cfg;
  cfg.algorithm = meta::Algorithm::RegPaml;
  cfg.outer_lr = 1e-3;
  cfg.lr_scale = 0.2;
  cfg.gamma = 0.5;
  cfg.batch_size = 16;
  cfg.seed = 11;
  meta::MetaTrainer trainer(fx.spec, cfg);
  std::size_t steps = 0, pairs = 0, bound_fail = 0;
  double worst = 0;
  for (int epoch = 0; epoch < 3; ++epoch) {
    for (std::size_t b = 0; b < fx.data.train.size(); b += cfg.batch_size) {
      std::vector<const tasks::TaskEpisode*> batch;
      for (std::size_t i = b; i < std::min(b + cfg.batch_size, fx.data.train.size()); ++i) batch.push_back(&fx.data.train[i]);
      const meta::TrainedModel before = trainer.model();
      const meta::StepLog log = trainer.outer_step(batch);
      // recompute every user's terms from the pre-step parameters
      double expect = 0;
      std::vector<double> losses, norms, alphas;
      std::vector<Eigen::VectorXd> emb;
      for (const auto* ep : batch) {
        const Batch s = tasks::support_batch(*ep), q = tasks::query_batch(*ep);
        const Vec<double> h = user_embedding(before.theta, before.spec, s.user);
        const double alpha = meta::lr_alpha(before.psi, before.head, h);
        const double lq = batch_loss(meta::inner_adapt(before.theta, before.spec, s, alpha), before.spec, q);
        const double lr = meta::reg_term(before.theta, before.spec, s, alpha);
        expect += lq + cfg.gamma * lr;
        losses.push_back(lq);
        norms.push_back(grad(before.theta, before.spec, s).params.flat().norm());
        alphas.push_back(alpha);
        emb.push_back(h);
      }
      worst = std::max({worst, std::abs(log.total - expect), std::abs(log.total - (log.query_sum + log.gamma * log.reg_sum))});
      const lemma::BoundReport br = lemma::bound_check(losses, norms, alphas, emb);
      pairs += br.pairs;
      bound_fail += !br.holds_first_order;
      ++steps;
    }
  }
  o.require(worst <= kAccountingTol);
  o.require(bound_fail == 0);
  o.note("%zu steps: max |logged total - sum(L_q + gamma L^r)| = %.2e (limit %.0e)", steps, worst, kAccountingTol);
  o.note("pairwise first-order bound: %zu batches violated, %zu pairs checked", bound_fail, pairs);
  return o;
}

// ---------------------------------------------------------------------------

Outcome determinism() {
  Outcome o;
  const auto a = scratch() / "imbalance-a", b = scratch() / "imbalance-b";
  if (!std::filesystem::exists(a / "summary.txt")) {
    std::ostringstream log;
    cli::run_experiment(cli::parse_config(imbalance_config(a)), log);
  }
  std::ostringstream log;
  cli::run_experiment(cli::parse_config(imbalance_config(b)), log);
  int same = 0, files = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
    const auto rel = std::filesystem::relative(entry.path(), a);
    ++files;
    const std::string x = slurp(entry.path());
    if (!x.empty() && x == slurp(b / rel))
      ++same;
    else
      o.note("differs: %s", rel.string().c_str());
  }
  o.require(files > 0 && same == files);
  o.note("%d/%d artifact files byte identical (manifest excluded: it records wall time)", same, files);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "lemma oracle suite", 10, lemma_suite},
      {2, "meta-gradient exactness", 60, meta_gradient},
      {3, "kNN oracle", 30, knn},
      {4, "synthetic imbalance experiment", 600, imbalance},
      {5, "metric goldens", 60, metric_goldens},
      {6, "MovieLens direction check", 2700, movielens},
      {7, "regularizer accounting", 60, accounting},
      {8, "determinism", 600, determinism},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.status = Status::Fail;
      o.note("exception: %s", e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.status != Status::Skip && secs > c.limit_s) {
      o.status = Status::Fail;
      o.note("runtime over the %.0f s limit", c.limit_s);
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    std::printf("%s criterion %d: %s (%.2f s)\n", tag, c.id, c.name, secs);
    for (const auto& d : o.details) std::printf("    %s\n", d.c_str());
    std::fflush(stdout);
    failed += o.status == Status::Fail;
  }
  std::filesystem::remove_all(scratch());
  std::printf("%d criteria failed\n", failed);
  return failed ? 1 : 0;
}
