#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "paml/eval/report.hpp"
#include "paml/meta/trainer.hpp"
#include "paml/tasks/preprocess.hpp"
#include "paml/tasks/synthetic.hpp"

namespace paml::cli {

struct SyntheticSource {
  tasks::TwoGroupParams params;
  std::array<int, 3> split{7, 1, 2};
};

struct MovieLensSource {
  std::filesystem::path ratings, users, movies;
  tasks::PreprocessConfig preprocess;
};

struct EmitFlags {
  bool lr = true;
  bool embeddings = false;
  bool tree = false;
  bool checkpoint = true;
  bool history = true;
};

struct ExperimentConfig {
  std::variant<SyntheticSource, MovieLensSource> dataset;
  std::vector<meta::Algorithm> algorithms{meta::Algorithm::RegPaml, meta::Algorithm::MamlFixed};
  ModelSpec model;  // vocabularies and output kind are filled in from the data
  nlohmann::json trainer = nlohmann::json::object();
  std::map<std::string, nlohmann::json> overrides;  // algorithm name -> trainer keys
  std::size_t trials = 3;
  std::vector<std::uint64_t> seeds;  // one per trial; defaults to 0..trials-1
  std::filesystem::path output_dir = "paml-out";
  EmitFlags emit;
  bool parallel_trials = false;

  /// Trainer settings for one algorithm and trial seed.
  meta::TrainerConfig trainer_for(meta::Algorithm a, std::uint64_t seed) const;
};

/// Parses and validates a config; unknown keys anywhere are rejected.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON form (all defaults spelled out).
nlohmann::json to_json(const ExperimentConfig& c);
meta::TrainerConfig parse_trainer(const nlohmann::json& j);
nlohmann::json to_json(const meta::TrainerConfig& c);

std::uint64_t config_hash(const ExperimentConfig& c);
std::string version_string();

/// Splits for one trial seed. `raw` caches the encoded MovieLens files across trials.
tasks::DatasetSplits build_dataset(const ExperimentConfig& c, std::uint64_t seed,
                                   std::optional<tasks::RawDataset>& raw);

/// Model spec for a dataset: config shape plus the data's vocabularies.
ModelSpec model_for(const ExperimentConfig& c, const tasks::DatasetSplits& data);

/// Per-user metrics of one evaluation: mse/ndcg@3/ndcg@5 for ratings, auc/nel for clicks.
std::vector<eval::MetricSample> user_metrics(const std::vector<meta::UserResult>& results,
                                             const tasks::DatasetSplits& data, OutputKind output, std::size_t trial);

struct AlgorithmRun {
  meta::Algorithm algorithm;
  std::size_t trial = 0;
  meta::TrainedModel model;
  std::vector<meta::UserResult> test;
};

struct ExperimentResult {
  std::vector<eval::MetricsReport> reports;  // one per algorithm, in config order
  std::vector<AlgorithmRun> runs;            // kept only when `keep_runs`
};

/// Full pipeline for every trial and algorithm; writes artifacts into output_dir.
ExperimentResult run_experiment(const ExperimentConfig& c, std::ostream& log, bool keep_runs = false);

}  // namespace paml::cli
