#include "paml/cli/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <mutex>
#include <set>

#include "paml/eval/metrics.hpp"
#include "paml/meta/checkpoint.hpp"

#ifndef PAML_VERSION
#define PAML_VERSION "0.0.0-unknown"
#endif

namespace paml::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Object reader that remembers which keys were consumed.
class Obj {
 public:
  Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InputError(where_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw InputError(where_ + "." + key + ": " + e.what());
    }
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw InputError(where_ + ": unknown key '" + k + "'");
  }

  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::array<int, 3> parse_split(Obj& o) {
  const auto v = o.get<std::vector<int>>("split", {7, 1, 2});
  if (v.size() != 3 || v[0] <= 0 || v[1] < 0 || v[2] < 0)
    throw InputError(o.where() + ".split: expected three non-negative ratios with a positive train share");
  return {v[0], v[1], v[2]};
}

memory::TreeConfig parse_tree(const json& j) {
  Obj o(j, "trainer.tree");
  memory::TreeConfig t;
  t.capacity = o.get<std::size_t>("capacity", t.capacity);
  const auto mode = o.get<std::string>("mode", "approximate");
  if (mode == "exact")
    t.mode = memory::SearchMode::Exact;
  else if (mode == "approximate")
    t.mode = memory::SearchMode::Approximate;
  else
    throw InputError("trainer.tree.mode must be 'exact' or 'approximate'");
  t.k_train = o.get<std::size_t>("k_train", t.k_train);
  t.k_infer = o.get<std::size_t>("k_infer", t.k_infer);
  t.delta = o.get<double>("delta", t.delta);
  t.sigma = o.get<double>("sigma", t.sigma);
  const auto ev = o.get<std::string>("eviction", "lru");
  if (ev == "lru")
    t.eviction = memory::Eviction::LeastRecentlyUsed;
  else if (ev == "lfu")
    t.eviction = memory::Eviction::LeastFrequentlyUsed;
  else
    throw InputError("trainer.tree.eviction must be 'lru' or 'lfu'");
  t.forest.trees = o.get<int>("trees", t.forest.trees);
  t.forest.top_dims = o.get<int>("top_dims", t.forest.top_dims);
  t.forest.checks = o.get<int>("checks", t.forest.checks);
  if (t.forest.trees <= 0 || t.forest.top_dims <= 0 || t.forest.checks <= 0)
    throw InputError("trainer.tree: trees, top_dims and checks must be positive");
  o.finish();
  return t;
}

json tree_json(const memory::TreeConfig& t) {
  return json{{"capacity", t.capacity},
              {"mode", t.mode == memory::SearchMode::Exact ? "exact" : "approximate"},
              {"k_train", t.k_train},
              {"k_infer", t.k_infer},
              {"delta", t.delta},
              {"sigma", t.sigma},
              {"eviction", t.eviction == memory::Eviction::LeastRecentlyUsed ? "lru" : "lfu"},
              {"trees", t.forest.trees},
              {"top_dims", t.forest.top_dims},
              {"checks", t.forest.checks}};
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Re-throws a library error with the failing stage prepended, keeping its type.
template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InputError& e) {
    throw InputError("[" + name + "] " + e.what());
  } catch (const DataError& e) {
    throw DataError("[" + name + "] " + e.what());
  } catch (const NumericError& e) {
    throw NumericError("[" + name + "] " + e.what());
  }
}

}  // namespace

meta::TrainerConfig parse_trainer(const json& j) {
  Obj o(j, "trainer");
  meta::TrainerConfig c;
  c.algorithm = meta::parse_algorithm(o.get<std::string>("algorithm", "paml"));
  if (o.has("outer_lr")) c.outer_lr = o.get<double>("outer_lr", 0);
  c.fixed_inner_lr = o.get<double>("fixed_inner_lr", c.fixed_inner_lr);
  if (o.has("finetune_lr")) c.finetune_lr = o.get<double>("finetune_lr", 0);
  c.epochs = o.get<std::size_t>("epochs", c.epochs);
  c.batch_size = o.get<std::size_t>("batch_size", c.batch_size);
  c.gamma = o.get<double>("gamma", c.gamma);
  c.warmup_epochs = o.get<std::size_t>("warmup_epochs", c.warmup_epochs);
  c.warmup_lr = o.get<double>("warmup_lr", c.warmup_lr);
  c.clip_norm = o.get<double>("clip_norm", c.clip_norm);
  const auto opt = o.get<std::string>("optimizer", "adam");
  if (opt == "adam")
    c.optimizer = meta::Optimizer::Adam;
  else if (opt == "sgd")
    c.optimizer = meta::Optimizer::Sgd;
  else
    throw InputError("trainer.optimizer must be 'adam' or 'sgd'");
  c.freeze_psi = o.get<bool>("freeze_psi", c.freeze_psi);
  c.lr_scale = o.get<double>("lr_scale", c.lr_scale);
  const auto rule = o.get<std::string>("psi_rule", "exact");
  if (rule == "exact")
    c.psi_rule = meta::PsiRule::Exact;
  else if (rule == "literal")
    c.psi_rule = meta::PsiRule::Literal;
  else
    throw InputError("trainer.psi_rule must be 'exact' or 'literal'");
  if (o.has("tree")) c.tree = parse_tree(o.raw("tree"));
  c.seed = o.get<std::uint64_t>("seed", c.seed);
  o.finish();
  c.validate();
  return c;
}

json to_json(const meta::TrainerConfig& c) {
  return json{{"algorithm", meta::to_string(c.algorithm)},
              {"outer_lr", c.outer_lr ? json(*c.outer_lr) : json(nullptr)},
              {"fixed_inner_lr", c.fixed_inner_lr},
              {"finetune_lr", c.finetune_lr ? json(*c.finetune_lr) : json(nullptr)},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"gamma", c.gamma},
              {"warmup_epochs", c.warmup_epochs},
              {"warmup_lr", c.warmup_lr},
              {"clip_norm", c.clip_norm},
              {"optimizer", c.optimizer == meta::Optimizer::Adam ? "adam" : "sgd"},
              {"freeze_psi", c.freeze_psi},
              {"lr_scale", c.lr_scale},
              {"psi_rule", c.psi_rule == meta::PsiRule::Exact ? "exact" : "literal"},
              {"tree", tree_json(c.tree)},
              {"seed", c.seed}};
}

meta::TrainerConfig ExperimentConfig::trainer_for(meta::Algorithm a, std::uint64_t seed) const {
  json j = trainer;
  if (auto it = overrides.find(meta::to_string(a)); it != overrides.end()) j.update(it->second);
  j["algorithm"] = meta::to_string(a);
  j["seed"] = seed;
  return parse_trainer(j);
}

ExperimentConfig parse_config(const json& j) {
  Obj o(j, "config");
  ExperimentConfig c;
  if (!o.has("dataset")) throw InputError("config: 'dataset' is required");
  {
    Obj d(o.raw("dataset"), "dataset");
    const auto kind = d.get<std::string>("kind", "");
    if (kind == "synthetic") {
      SyntheticSource s;
      auto& p = s.params;
      p.p1 = d.get<double>("p1", p.p1);
      p.p2 = d.get<double>("p2", 1.0 - p.p1);
      p.x1 = d.get<double>("x1", p.x1);
      p.x2 = d.get<double>("x2", p.x2);
      p.n_tasks = d.get<std::size_t>("n_tasks", p.n_tasks);
      p.noise_sd = d.get<double>("noise_sd", p.noise_sd);
      p.items_per_task = d.get<std::size_t>("items_per_task", p.items_per_task);
      p.item_vocab = d.get<int>("item_vocab", p.item_vocab);
      p.support_ratio = d.get<double>("support_ratio", p.support_ratio);
      s.split = parse_split(d);
      c.dataset = s;
    } else if (kind == "movielens") {
      MovieLensSource s;
      s.ratings = d.get<std::string>("ratings", "");
      s.users = d.get<std::string>("users", "");
      s.movies = d.get<std::string>("movies", "");
      if (s.ratings.empty() || s.users.empty() || s.movies.empty())
        throw InputError("dataset: movielens needs 'ratings', 'users' and 'movies' paths");
      auto& p = s.preprocess;
      p.cold_start_fraction = d.get<double>("cold_start_fraction", p.cold_start_fraction);
      p.min_items = d.get<std::size_t>("min_items", p.min_items);
      p.support_ratio = d.get<double>("support_ratio", p.support_ratio);
      p.min_age = d.get<int>("min_age", p.min_age);
      p.max_age = d.get<int>("max_age", p.max_age);
      p.max_users = d.get<std::size_t>("max_users", p.max_users);
      p.split = parse_split(d);
      c.dataset = s;
    } else {
      throw InputError("dataset.kind must be 'synthetic' or 'movielens'");
    }
    d.finish();
  }
  if (o.has("algorithms")) {
    c.algorithms.clear();
    for (const auto& a : o.get<std::vector<std::string>>("algorithms", {})) c.algorithms.push_back(meta::parse_algorithm(a));
    if (c.algorithms.empty()) throw InputError("config: 'algorithms' is empty");
  }
  if (o.has("model")) {
    Obj m(o.raw("model"), "model");
    c.model.embedding_dim = m.get<Index>("embedding_dim", c.model.embedding_dim);
    c.model.decision_dims = m.get<std::vector<Index>>("decision_dims", c.model.decision_dims);
    c.model.lr_dims = m.get<std::vector<Index>>("lr_dims", c.model.lr_dims);
    c.model.user_in_decision = m.get<bool>("user_in_decision", c.model.user_in_decision);
    c.model.lr_relu_last_hidden = m.get<bool>("lr_relu_last_hidden", c.model.lr_relu_last_hidden);
    m.finish();
  }
  if (o.has("trainer")) c.trainer = o.raw("trainer");
  if (c.trainer.contains("algorithm") || c.trainer.contains("seed"))
    throw InputError("trainer: 'algorithm' and 'seed' come from 'algorithms' and 'seeds'");
  if (o.has("overrides")) {
    Obj ov(o.raw("overrides"), "overrides");
    for (const auto& [k, v] : o.raw("overrides").items()) {
      meta::parse_algorithm(k);
      ov.has(k);
      c.overrides[k] = v;
    }
    ov.finish();
  }
  c.trials = o.get<std::size_t>("trials", c.trials);
  if (c.trials == 0) throw InputError("config: 'trials' must be at least 1");
  c.seeds = o.get<std::vector<std::uint64_t>>("seeds", {});
  if (c.seeds.empty())
    for (std::size_t t = 0; t < c.trials; ++t) c.seeds.push_back(t);
  if (c.seeds.size() != c.trials) throw InputError("config: 'seeds' must list one seed per trial");
  c.output_dir = o.get<std::string>("output_dir", c.output_dir.string());
  c.parallel_trials = o.get<bool>("parallel_trials", false);
  if (o.has("emit")) {
    Obj e(o.raw("emit"), "emit");
    c.emit.lr = e.get<bool>("lr", c.emit.lr);
    c.emit.embeddings = e.get<bool>("embeddings", c.emit.embeddings);
    c.emit.tree = e.get<bool>("tree", c.emit.tree);
    c.emit.checkpoint = e.get<bool>("checkpoint", c.emit.checkpoint);
    c.emit.history = e.get<bool>("history", c.emit.history);
    e.finish();
  }
  o.finish();
  // validate every trainer variant before any work starts
  for (meta::Algorithm a : c.algorithms) c.trainer_for(a, c.seeds.front());
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  if (const auto* s = std::get_if<SyntheticSource>(&c.dataset)) {
    const auto& p = s->params;
    j["dataset"] = {{"kind", "synthetic"}, {"p1", p.p1}, {"p2", p.p2}, {"x1", p.x1}, {"x2", p.x2},
                    {"n_tasks", p.n_tasks}, {"noise_sd", p.noise_sd}, {"items_per_task", p.items_per_task},
                    {"item_vocab", p.item_vocab}, {"support_ratio", p.support_ratio}, {"split", s->split}};
  } else {
    const auto& m = std::get<MovieLensSource>(c.dataset);
    const auto& p = m.preprocess;
    j["dataset"] = {{"kind", "movielens"}, {"ratings", m.ratings.string()}, {"users", m.users.string()},
                    {"movies", m.movies.string()}, {"cold_start_fraction", p.cold_start_fraction},
                    {"min_items", p.min_items}, {"support_ratio", p.support_ratio}, {"min_age", p.min_age},
                    {"max_age", p.max_age}, {"max_users", p.max_users}, {"split", p.split}};
  }
  std::vector<std::string> algs;
  for (auto a : c.algorithms) algs.push_back(meta::to_string(a));
  j["algorithms"] = algs;
  j["model"] = {{"embedding_dim", c.model.embedding_dim}, {"decision_dims", c.model.decision_dims},
                {"lr_dims", c.model.lr_dims}, {"user_in_decision", c.model.user_in_decision},
                {"lr_relu_last_hidden", c.model.lr_relu_last_hidden}};
  json trainer = to_json(parse_trainer(c.trainer));
  trainer.erase("algorithm");
  trainer.erase("seed");
  j["trainer"] = trainer;
  j["overrides"] = json::object();
  for (const auto& [k, v] : c.overrides) j["overrides"][k] = v;
  j["trials"] = c.trials;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir.string();
  j["parallel_trials"] = c.parallel_trials;
  j["emit"] = {{"lr", c.emit.lr}, {"embeddings", c.emit.embeddings}, {"tree", c.emit.tree},
               {"checkpoint", c.emit.checkpoint}, {"history", c.emit.history}};
  return j;
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  j.erase("parallel_trials");
  return meta::fnv1a(j.dump());
}

std::string version_string() { return PAML_VERSION; }

tasks::DatasetSplits build_dataset(const ExperimentConfig& c, std::uint64_t seed,
                                   std::optional<tasks::RawDataset>& raw) {
  if (const auto* s = std::get_if<SyntheticSource>(&c.dataset)) {
    tasks::TwoGroupParams p = s->params;
    p.seed = seed;
    return tasks::synthetic_splits(p, s->split);
  }
  const auto& m = std::get<MovieLensSource>(c.dataset);
  if (!raw) raw = tasks::encode_movielens(tasks::load_movielens(m.ratings, m.users, m.movies));
  tasks::PreprocessConfig pc = m.preprocess;
  pc.seed = seed;
  tasks::DatasetSplits d = tasks::preprocess(*raw, pc);
  d.groups = tasks::classify_major_minor(d);
  return d;
}

ModelSpec model_for(const ExperimentConfig& c, const tasks::DatasetSplits& data) {
  ModelSpec s = c.model;
  s.user_vocab = data.user_vocab;
  s.item_vocab = data.item_vocab;
  s.output = data.output;
  s.validate();
  return s;
}

std::vector<eval::MetricSample> user_metrics(const std::vector<meta::UserResult>& results,
                                             const tasks::DatasetSplits& data, OutputKind output, std::size_t trial) {
  std::vector<eval::MetricSample> out;
  // graded gains need non-negative targets; regression-style data gets mse only
  bool graded = true;
  for (const meta::UserResult& r : results)
    for (double t : r.targets) graded = graded && t >= 0;
  for (const meta::UserResult& r : results) {
    const auto g = data.groups.find(r.user_id);
    if (g == data.groups.end()) throw InputError("user " + std::to_string(r.user_id) + " has no major/minor label");
    auto add = [&](const char* metric, double v) { out.push_back({trial, r.user_id, g->second, metric, v}); };
    if (output == OutputKind::Rating) {
      std::vector<double> res(r.scores.size());
      for (std::size_t j = 0; j < res.size(); ++j) res[j] = r.scores[j] - r.targets[j];
      add("mse", eval::mse(res));
      if (!graded) continue;
      add("ndcg@3", eval::ndcg_at_k(r.targets, r.scores, 3));
      add("ndcg@5", eval::ndcg_at_k(r.targets, r.scores, 5));
    } else {
      bool pos = false, neg = false;
      for (double t : r.targets) (t > 0.5 ? pos : neg) = true;
      if (pos && neg) add("auc", eval::auc(r.targets, r.scores));
      add("nel", eval::weighted_nel(r.targets, r.scores));
    }
  }
  return out;
}

namespace {

struct TrialOutput {
  std::vector<std::vector<eval::MetricSample>> samples;  // per algorithm
  std::vector<AlgorithmRun> runs;
};

void write_lr_dump(const fs::path& path, const std::vector<meta::UserResult>& results, const tasks::DatasetSplits& d) {
  std::ofstream out(path, std::ios::binary);
  out << "user\tgroup\talpha\n";
  for (const auto& r : results) out << r.user_id << '\t' << tasks::to_string(d.groups.at(r.user_id)) << '\t' << num(r.alpha) << '\n';
}

void write_embedding_dump(const fs::path& path, const std::vector<meta::UserResult>& results,
                          const tasks::DatasetSplits& d) {
  std::ofstream out(path, std::ios::binary);
  out << "user\tgroup\talpha";
  const Index dim = results.empty() ? 0 : results.front().embedding.size();
  for (Index k = 0; k < dim; ++k) out << "\th" << k;
  out << '\n';
  for (const auto& r : results) {
    out << r.user_id << '\t' << tasks::to_string(d.groups.at(r.user_id)) << '\t' << num(r.alpha);
    for (Index k = 0; k < dim; ++k) out << '\t' << num(r.embedding(k));
    out << '\n';
  }
}

void write_history(const fs::path& path, const meta::TrainedModel& m) {
  std::ofstream out(path, std::ios::binary);
  out << "epoch\twarmup\ttrain_objective\tvalidation_loss\tbest\n";
  for (const auto& h : m.history)
    out << h.epoch << '\t' << (h.warmup ? 1 : 0) << '\t' << num(h.train_objective) << '\t' << num(h.validation_loss)
        << '\t' << (h.epoch == m.best_epoch ? 1 : 0) << '\n';
}

TrialOutput run_trial(const ExperimentConfig& c, std::size_t trial, std::optional<tasks::RawDataset>& raw,
                      std::ostream& log, std::mutex& log_mutex, bool keep_runs) {
  const std::uint64_t seed = c.seeds[trial];
  auto say = [&](const std::string& s) {
    std::lock_guard<std::mutex> lock(log_mutex);
    log << s << std::flush;
  };
  const tasks::DatasetSplits data = stage("data", [&] { return build_dataset(c, seed, raw); });
  const ModelSpec spec = stage("model", [&] { return model_for(c, data); });
  say("trial " + std::to_string(trial) + " (seed " + std::to_string(seed) + "): " + std::to_string(data.train.size()) +
      " train / " + std::to_string(data.validation.size()) + " validation / " + std::to_string(data.test.size()) +
      " test users\n");
  const fs::path dir = c.output_dir / ("trial_" + std::to_string(trial));
  fs::create_directories(dir);
  TrialOutput out;
  for (meta::Algorithm a : c.algorithms) {
    const std::string name = meta::to_string(a);
    const meta::TrainerConfig tc = c.trainer_for(a, seed);
    meta::TrainedModel model;
    try {
      model = stage("train " + name, [&] { return meta::train(data, spec, tc); });
    } catch (const NumericError& e) {
      std::ofstream diag(dir / ("diagnostics_" + name + ".txt"));
      diag << e.what() << '\n';
      throw;
    }
    for (const auto& h : model.history)
      say("  " + name + " epoch " + std::to_string(h.epoch) + (h.warmup ? " (warm-up)" : "") + ": train " +
          num(h.train_objective) + ", validation " + num(h.validation_loss) + "\n");
    std::vector<meta::UserResult> test = stage("evaluate " + name, [&] { return meta::evaluate(model, data.test); });
    out.samples.push_back(stage("metrics " + name, [&] { return user_metrics(test, data, spec.output, trial); }));
    stage("artifacts " + name, [&] {
      if (c.emit.lr) write_lr_dump(dir / ("lr_" + name + ".tsv"), test, data);
      if (c.emit.embeddings) write_embedding_dump(dir / ("embeddings_" + name + ".tsv"), test, data);
      if (c.emit.tree && model.tree) model.tree->save(dir / ("tree_" + name + ".txt"));
      if (c.emit.checkpoint) {
        json id = {{"config", config_hash(c)}, {"algorithm", name}, {"seed", seed}};
        meta::save_checkpoint(model, dir / ("checkpoint_" + name + ".txt"), meta::fnv1a(id.dump()));
      }
      if (c.emit.history) write_history(dir / ("history_" + name + ".tsv"), model);
      return 0;
    });
    if (keep_runs) out.runs.push_back({a, trial, std::move(model), std::move(test)});
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& c, std::ostream& log, bool keep_runs) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(c.output_dir);
  const fs::path marker = c.output_dir / "INCOMPLETE";
  {
    std::ofstream m(marker);
    m << "outputs in this directory are stale until the run finishes\n";
  }
  std::mutex log_mutex;
  std::optional<tasks::RawDataset> raw;
  std::vector<TrialOutput> trials(c.trials);
  if (c.parallel_trials && c.trials > 1) {
    // load shared data once, then give every trial its own copy of the cache
    if (std::holds_alternative<MovieLensSource>(c.dataset)) stage("data", [&] { build_dataset(c, c.seeds[0], raw); return 0; });
    std::vector<std::future<TrialOutput>> futures;
    for (std::size_t t = 0; t < c.trials; ++t)
      futures.push_back(std::async(std::launch::async, [&, t] {
        std::optional<tasks::RawDataset> local = raw;
        return run_trial(c, t, local, log, log_mutex, keep_runs);
      }));
    for (std::size_t t = 0; t < c.trials; ++t) trials[t] = futures[t].get();
  } else {
    for (std::size_t t = 0; t < c.trials; ++t) trials[t] = run_trial(c, t, raw, log, log_mutex, keep_runs);
  }

  ExperimentResult result;
  for (std::size_t a = 0; a < c.algorithms.size(); ++a) {
    std::vector<eval::MetricSample> samples;
    for (const TrialOutput& t : trials) samples.insert(samples.end(), t.samples[a].begin(), t.samples[a].end());
    result.reports.push_back(eval::build_report(meta::to_string(c.algorithms[a]), std::move(samples), c.trials));
    eval::write_report_tsv(result.reports.back(), c.output_dir / ("report_" + result.reports.back().label + ".tsv"));
  }
  const std::string table = eval::format_table(result.reports);
  {
    std::ofstream out(c.output_dir / "summary.txt", std::ios::binary);
    out << table;
  }
  log << table;
  if (keep_runs)
    for (TrialOutput& t : trials)
      for (AlgorithmRun& r : t.runs) result.runs.push_back(std::move(r));

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  json manifest = {{"version", version_string()}, {"config_hash", hash}, {"wall_time_seconds", wall},
                   {"config", to_json(c)}};
  std::ofstream(c.output_dir / "manifest.json") << manifest.dump(2) << '\n';
  fs::remove(marker);
  return result;
}

}  // namespace paml::cli
