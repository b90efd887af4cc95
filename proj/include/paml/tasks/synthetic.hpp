#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "paml/tasks/types.hpp"

namespace paml::tasks {

/// Two-group regression tasks: each task belongs to group 1 with
/// probability p1; its targets are x_g + N(0, noise_sd). The single user slot
/// holds the group id (0 for group 1, 1 for group 2); item ids carry no signal.
struct TwoGroupParams {
  double p1 = 0.8;
  double p2 = 0.2;
  double x1 = 0.0;
  double x2 = 1.0;
  std::size_t n_tasks = 2000;
  double noise_sd = 0.1;
  std::uint64_t seed = 0;
  std::size_t items_per_task = 10;
  int item_vocab = 20;
  double support_ratio = 0.8;
};

std::vector<TaskEpisode> synth_two_group(const TwoGroupParams& params);

/// Group index (0 or 1) of a synthetic episode.
inline int synthetic_group(const TaskEpisode& ep) { return ep.user.features.at(0).at(0); }

/// Seeded 7:1:2 (or `split`) user split of synthetic episodes, labelling
/// group 1 major and group 2 minor.
DatasetSplits synthetic_splits(const TwoGroupParams& params, std::array<int, 3> split = {7, 1, 2});

/// Splits n users into train/validation/test counts in the given ratio.
std::array<std::size_t, 3> split_counts(std::size_t n, std::array<int, 3> split);

}  // namespace paml::tasks
