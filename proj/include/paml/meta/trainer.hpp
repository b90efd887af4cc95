#pragma once

#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "paml/memory/tree_memory.hpp"
#include "paml/meta/episode.hpp"
#include "paml/tasks/types.hpp"

namespace paml::meta {

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Vec<double> m;
  Vec<double> v;
  std::size_t t = 0;

  /// Returns the step to subtract from the parameters.
  Vec<double> step(const Vec<double>& g, double lr);
};

/// One outer step as recorded in the training log.
struct StepLog {
  std::size_t epoch = 0;
  bool warmup = false;
  std::vector<EpisodeLog> users;
  double total = 0;       // sum of per-user objectives (query loss + gamma * L^r)
  double query_sum = 0;   // sum of query losses
  double reg_sum = 0;     // sum of L^r
  double gamma = 0;       // weight applied to reg_sum
  double grad_norm = 0;   // joint norm before clipping
  bool clipped = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  bool warmup = false;
  double train_objective = 0;   // mean per-user objective over the epoch
  double validation_loss = 0;   // mean per-user adapted query loss; NaN without a validation split
};

struct TrainedModel {
  TrainerConfig config;
  ModelSpec spec;
  LrHeadSpec head;
  ParamSet<double> theta;
  ParamSet<double> psi;       // empty for maml-fixed, meta-sgd and transfer
  Vec<double> meta_sgd;       // per-parameter rates, meta-sgd only
  std::optional<memory::TreeMemory> tree;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 1-based; 0 means the initial parameters were kept
};

/// Fresh parameters for `algorithm`, seeded from config.seed.
TrainedModel init_model(const ModelSpec& spec, const TrainerConfig& config);

/// Outer-loop driver. Holds the optimizer state and the epoch counter.
class MetaTrainer {
 public:
  MetaTrainer(const ModelSpec& spec, const TrainerConfig& config);
  explicit MetaTrainer(TrainedModel model);

  /// One meta-update on a batch of training episodes.
  StepLog outer_step(const std::vector<const tasks::TaskEpisode*>& batch);

  /// One pass over `train` in seeded shuffled batches.
  std::vector<StepLog> run_epoch(const std::vector<tasks::TaskEpisode>& train);

  bool in_warmup() const;
  std::size_t epoch() const { return epoch_; }
  const TrainedModel& model() const { return model_; }
  TrainedModel& model() { return model_; }

 private:
  EpisodeSetup<double> setup(bool warmup) const;

  TrainedModel model_;
  Adam adam_theta_, adam_psi_, adam_rates_;
  std::mt19937_64 rng_;
  std::size_t epoch_ = 0;
};

using StepCallback = std::function<void(const StepLog&)>;

/// Runs config.epochs epochs, records validation loss per epoch and returns
/// the parameters of the best validation epoch.
TrainedModel train(const tasks::DatasetSplits& data, const ModelSpec& spec, const TrainerConfig& config,
                   const StepCallback& on_step = {});

/// Adapted predictions for one user.
struct UserResult {
  int user_id = 0;
  std::vector<double> targets;
  std::vector<double> scores;  // predicted rating, or click probability
  Mat<double> outputs;         // raw forward() values (1 x n ratings or 2 x n probabilities)
  double query_loss = 0;
  double alpha = 0;
  Vec<double> embedding;
};

/// Adapts on each support set with the algorithm's own rule and predicts the
/// query set. Only at-paml's read-only tree lookups touch model state.
std::vector<UserResult> evaluate(const TrainedModel& model, const std::vector<tasks::TaskEpisode>& episodes);

/// One fine-tuning step on the support set (transfer baseline).
ParamSet<double> finetune(const ParamSet<double>& theta, const ModelSpec& spec, const Batch& support, double lr);

/// Rate used to adapt `h` at evaluation time.
double evaluation_alpha(const TrainedModel& model, const Vec<double>& h);

}  // namespace paml::meta
