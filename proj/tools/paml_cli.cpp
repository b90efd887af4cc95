// Command-line front end: run experiments, check the two-group lemmas,
// inspect tree dumps and dump user embeddings from a checkpoint.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "paml/cli/experiment.hpp"
#include "paml/lemma/two_group.hpp"
#include "paml/meta/checkpoint.hpp"

namespace {

using nlohmann::json;
using namespace paml;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

int cmd_run(const std::string& config_path, const std::string& output_dir, int trials, int epochs,
            const std::vector<std::string>& algorithms, bool parallel) {
  std::ifstream in(config_path);
  if (!in) throw InputError("cannot open config " + config_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("config " + config_path + ": " + e.what());
  }
  if (!output_dir.empty()) j["output_dir"] = output_dir;
  if (trials > 0) {
    j["trials"] = trials;
    if (j.contains("seeds") && j["seeds"].size() != static_cast<std::size_t>(trials)) j.erase("seeds");
  }
  if (epochs >= 0) j["trainer"]["epochs"] = epochs;
  if (!algorithms.empty()) j["algorithms"] = algorithms;
  if (parallel) j["parallel_trials"] = true;
  const cli::ExperimentConfig c = cli::parse_config(j);
  cli::run_experiment(c, std::cout);
  std::cout << "artifacts written to " << c.output_dir.string() << '\n';
  return kOk;
}

void print_bound(const lemma::TwoGroupSpec& s, const lemma::LemmaReport& r) {
  // the two groups as two users at the fixed-rate optimum
  const double losses[] = {r.group1_loss, r.group2_loss};
  const double grads[] = {2 * std::abs(r.theta_star - s.x1), 2 * std::abs(r.theta_star - s.x2)};
  const double alphas[] = {s.alpha, s.alpha};
  const std::vector<Eigen::VectorXd> h{Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)};
  const lemma::BoundReport b = lemma::bound_check(losses, grads, alphas, h);
  std::printf("bound.lhs                 %.12g\n", b.lhs);
  std::printf("bound.first_order_rhs     %.12g\n", b.first_order_rhs);
  std::printf("bound.holds_full          %s\n", b.holds_full ? "true" : "false");
  std::printf("bound.holds_first_order   %s\n", b.holds_first_order ? "true" : "false");
}

int cmd_lemmas(double p1, double p2, double x1, double x2, double alpha, double alpha2, const std::string& convention) {
  lemma::TwoGroupSpec s;
  s.p1 = p1;
  s.p2 = p2 < 0 ? 1 - p1 : p2;
  s.x1 = x1;
  s.x2 = x2;
  s.alpha = alpha;
  if (alpha2 >= 0) s.alpha2 = alpha2;
  if (convention == "ascent")
    s.convention = lemma::Convention::Ascent;
  else if (convention != "descent")
    throw InputError("--convention must be 'descent' or 'ascent'");
  const lemma::LemmaReport r = lemma::verify_lemmas(s);
  std::printf("spec                      p1=%g p2=%g x1=%g x2=%g alpha=%g alpha2=%.12g convention=%s\n", s.p1, s.p2,
              s.x1, s.x2, s.alpha, r.alpha2, convention.c_str());
  std::printf("theta_star                %.12g\n", r.theta_star);
  std::printf("theta_star_prime          %.12g\n", r.theta_star_prime);
  std::printf("closed_form_error         %.3g\n", r.closed_form_error);
  std::printf("group_losses              %.12g %.12g\n", r.group1_loss, r.group2_loss);
  std::printf("group_losses_prime        %.12g %.12g\n", r.group1_loss_prime, r.group2_loss_prime);
  std::printf("L_star                    %.12g\n", r.L_star);
  std::printf("L_star_prime              %.12g\n", r.L_star_prime);
  std::printf("lemma1_holds              %s%s\n", r.lemma1_holds ? "true" : "false",
              std::abs(r.group1_loss - r.group2_loss) <= 1e-10 ? " (equality)" : "");
  std::printf("lemma2_minor_improves     %s\n", r.minor_improves ? "true" : "false");
  std::printf("lemma2_total_improves     %s\n", r.total_improves ? "true" : "false");
  std::printf("lemma2_holds              %s%s\n", r.lemma2_holds ? "true" : "false",
              std::abs(r.L_star - r.L_star_prime) <= 1e-10 ? " (equality)" : "");
  print_bound(s, r);
  return kOk;
}

std::vector<double> parse_vector(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      v.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw InputError("--query: bad number '" + tok + "'");
    }
  }
  return v;
}

int cmd_inspect_tree(const std::string& path, const std::string& query, std::size_t k, bool exact) {
  memory::TreeConfig tc;
  tc.mode = exact ? memory::SearchMode::Exact : memory::SearchMode::Approximate;
  const memory::TreeMemory t = memory::TreeMemory::load(path, tc);
  std::printf("nodes      %zu\n", t.size());
  std::printf("dim        %ld\n", static_cast<long>(t.dim()));
  std::printf("counter    %llu\n", static_cast<unsigned long long>(t.counter()));
  std::printf("evictions  %zu\n", t.evictions());
  if (t.size() > 0) {
    double lo = 1, hi = 0, sum = 0;
    for (const auto& n : t.nodes()) {
      lo = std::min(lo, n.lr);
      hi = std::max(hi, n.lr);
      sum += n.lr;
    }
    std::printf("lr         min %.6g  mean %.6g  max %.6g\n", lo, sum / static_cast<double>(t.size()), hi);
  }
  if (!query.empty()) {
    const std::vector<double> q = parse_vector(query);
    if (static_cast<Index>(q.size()) != t.dim()) throw InputError("--query has the wrong dimension");
    const Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(q.data(), static_cast<Index>(q.size()));
    std::printf("id\tsquared_distance\tlr\trecency\n");
    for (const auto& hit : t.query(h, k)) {
      const auto& node = t.nodes()[*t.find(hit.id)];
      std::printf("%llu\t%.12g\t%.12g\t%llu\n", static_cast<unsigned long long>(hit.id), hit.squared_distance, hit.lr,
                  static_cast<unsigned long long>(node.recency));
    }
  }
  return kOk;
}

int cmd_dump_embeddings(const std::string& config_path, const std::string& checkpoint, const std::string& algorithm,
                        std::size_t trial, const std::string& split, const std::string& out_path) {
  const cli::ExperimentConfig c = cli::load_config(config_path);
  if (trial >= c.trials) throw InputError("--trial out of range");
  std::optional<tasks::RawDataset> raw;
  const tasks::DatasetSplits data = cli::build_dataset(c, c.seeds[trial], raw);
  const ModelSpec spec = cli::model_for(c, data);
  meta::TrainedModel model = meta::init_model(spec, c.trainer_for(meta::parse_algorithm(algorithm), c.seeds[trial]));
  meta::load_checkpoint(checkpoint, model);
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::binary);
    if (!file) throw DataError("cannot write " + out_path);
  }
  std::ostream& out = out_path.empty() ? std::cout : file;
  out << "split\tuser\tgroup\talpha";
  for (Index k = 0; k < spec.user_embedding_dim(); ++k) out << "\th" << k;
  out << '\n';
  auto dump = [&](const char* name, const std::vector<tasks::TaskEpisode>& eps) {
    for (const auto& ep : eps) {
      const Eigen::VectorXd h = user_embedding(model.theta, spec, ep.user.features);
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", meta::evaluation_alpha(model, h));
      out << name << '\t' << ep.user.user_id << '\t' << tasks::to_string(data.groups.at(ep.user.user_id)) << '\t' << buf;
      for (Index k = 0; k < h.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", h(k));
        out << '\t' << buf;
      }
      out << '\n';
    }
  };
  if (split == "train" || split == "all") dump("train", data.train);
  if (split == "validation" || split == "all") dump("validation", data.validation);
  if (split == "test" || split == "all") dump("test", data.test);
  if (split != "train" && split != "validation" && split != "test" && split != "all")
    throw InputError("--split must be train, validation, test or all");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized adaptive meta-learning laboratory"};
  app.require_subcommand(1);

  std::string config, output_dir, checkpoint, algorithm, split = "test", out_path, tree_path, query, convention = "descent";
  int trials = 0, epochs = -1;
  std::vector<std::string> algorithms;
  bool parallel = false, exact = false;
  double p1 = 0.7, p2 = -1, x1 = 0, x2 = 1, alpha = 0.1, alpha2 = -1;
  std::size_t k = 5, trial = 0;

  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("-c,--config", config, "config file")->required();
  run->add_option("-o,--output-dir", output_dir, "override output_dir");
  run->add_option("--trials", trials, "override the number of trials");
  run->add_option("--epochs", epochs, "override trainer.epochs");
  run->add_option("--algorithms", algorithms, "override the algorithm list")->delimiter(',');
  run->add_flag("--parallel", parallel, "run trials in parallel");

  auto* lem = app.add_subcommand("lemmas", "verify the two-group lemmas numerically");
  lem->add_option("--p1", p1, "major-group probability");
  lem->add_option("--p2", p2, "minor-group probability (default 1 - p1)");
  lem->add_option("--x1", x1, "major-group target");
  lem->add_option("--x2", x2, "minor-group target");
  lem->add_option("--alpha", alpha, "shared inner rate");
  lem->add_option("--alpha2", alpha2, "minor-group rate (default: equalizing rate)");
  lem->add_option("--convention", convention, "inner step sign: descent or ascent");

  auto* insp = app.add_subcommand("inspect-tree", "summarize a tree dump");
  insp->add_option("tree", tree_path, "tree dump file")->required();
  insp->add_option("--query", query, "comma-separated embedding to look up");
  insp->add_option("-k", k, "neighbour count");
  insp->add_flag("--exact", exact, "exact search instead of the randomized forest");

  auto* dump = app.add_subcommand("dump-embeddings", "write user embeddings and rates from a checkpoint");
  dump->add_option("-c,--config", config, "experiment config")->required();
  dump->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  dump->add_option("--algorithm", algorithm, "algorithm of the checkpoint")->required();
  dump->add_option("--trial", trial, "trial index (selects the seed)");
  dump->add_option("--split", split, "train, validation, test or all");
  dump->add_option("-o,--out", out_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(config, output_dir, trials, epochs, algorithms, parallel);
    if (*lem) return cmd_lemmas(p1, p2, x1, x2, alpha, alpha2, convention);
    if (*insp) return cmd_inspect_tree(tree_path, query, k, exact);
    if (*dump) return cmd_dump_embeddings(config, checkpoint, algorithm, trial, split, out_path);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
