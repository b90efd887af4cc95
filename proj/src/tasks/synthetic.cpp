#include "paml/tasks/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "paml/error.hpp"

namespace paml::tasks {

std::array<std::size_t, 3> split_counts(std::size_t n, std::array<int, 3> split) {
  if (split[0] < 0 || split[1] < 0 || split[2] < 0 || split[0] + split[1] + split[2] == 0)
    throw InputError("split ratios must be non-negative and not all zero");
  const std::size_t total = static_cast<std::size_t>(split[0] + split[1] + split[2]);
  const std::size_t c1 = (n * static_cast<std::size_t>(split[0]) * 2 + total) / (2 * total);
  const std::size_t c2 = (n * static_cast<std::size_t>(split[0] + split[1]) * 2 + total) / (2 * total);
  return {c1, c2 - c1, n - c2};
}

std::vector<TaskEpisode> synth_two_group(const TwoGroupParams& p) {
  if (!(p.p1 > 0 && p.p2 > 0 && p.p1 >= p.p2) && !(p.p1 == 1.0 && p.p2 == 0.0))
    throw InputError("two-group probabilities must satisfy p1 >= p2 > 0");
  if (std::abs(p.p1 + p.p2 - 1.0) > 1e-12) throw InputError("two-group probabilities must sum to 1");
  if (p.noise_sd < 0) throw InputError("noise_sd must be non-negative");
  if (p.items_per_task < 2) throw InputError("items_per_task must be at least 2");
  if (p.item_vocab <= 0) throw InputError("item_vocab must be positive");

  std::mt19937_64 rng(p.seed);
  std::bernoulli_distribution group1(p.p1);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> item(0, p.item_vocab - 1);
  const std::size_t s = support_size(p.items_per_task, p.support_ratio);

  std::vector<TaskEpisode> out;
  out.reserve(p.n_tasks);
  for (std::size_t t = 0; t < p.n_tasks; ++t) {
    const int g = group1(rng) ? 0 : 1;
    const double x = g == 0 ? p.x1 : p.x2;
    TaskEpisode ep;
    ep.user.user_id = static_cast<int>(t);
    ep.user.features = {{g}};
    for (std::size_t j = 0; j < p.items_per_task; ++j) {
      Interaction it;
      it.item_id = item(rng);
      it.features = {{it.item_id}};
      const double z = noise(rng);
      it.feedback = p.noise_sd == 0.0 ? x : x + p.noise_sd * z;
      (j < s ? ep.support : ep.query).push_back(std::move(it));
    }
    out.push_back(std::move(ep));
  }
  return out;
}

DatasetSplits synthetic_splits(const TwoGroupParams& params, std::array<int, 3> split) {
  std::vector<TaskEpisode> episodes = synth_two_group(params);
  std::mt19937_64 rng(params.seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(episodes.begin(), episodes.end(), rng);
  const auto counts = split_counts(episodes.size(), split);
  DatasetSplits out;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    auto& dst = i < counts[0] ? out.train : i < counts[0] + counts[1] ? out.validation : out.test;
    out.groups[episodes[i].user.user_id] = synthetic_group(episodes[i]) == 0 ? UserGroup::Major : UserGroup::Minor;
    dst.push_back(std::move(episodes[i]));
  }
  out.user_slots = {"group"};
  out.item_slots = {"item"};
  out.user_vocab = {2};
  out.item_vocab = {params.item_vocab};
  out.output = OutputKind::Rating;
  return out;
}

}  // namespace paml::tasks
