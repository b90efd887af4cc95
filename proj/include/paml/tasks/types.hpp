#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paml/core/model.hpp"

namespace paml::tasks {

struct UserProfile {
  int user_id = 0;
  FeatureRow features;     // one bag per user slot
  std::optional<int> age;  // years, when the source records it
};

struct Interaction {
  int item_id = 0;
  FeatureRow features;  // one bag per item slot
  double feedback = 0;  // rating 1..5, or click 0/1
  std::optional<std::int64_t> timestamp;
};

/// One user's adaptation (support) and evaluation (query) interactions.
struct TaskEpisode {
  UserProfile user;
  std::vector<Interaction> support;
  std::vector<Interaction> query;
};

enum class UserGroup { Major, Minor };

inline const char* to_string(UserGroup g) { return g == UserGroup::Major ? "major" : "minor"; }

struct DatasetSplits {
  std::vector<TaskEpisode> train;
  std::vector<TaskEpisode> validation;
  std::vector<TaskEpisode> test;
  std::vector<std::string> user_slots;
  std::vector<std::string> item_slots;
  std::vector<int> user_vocab;
  std::vector<int> item_vocab;
  OutputKind output = OutputKind::Rating;
  std::map<int, UserGroup> groups;  // user id -> label; may be empty until classified
};

inline Batch to_batch(const UserProfile& user, const std::vector<Interaction>& items) {
  Batch b;
  b.user = user.features;
  b.items.reserve(items.size());
  b.targets.reserve(items.size());
  for (const Interaction& it : items) {
    b.items.push_back(it.features);
    b.targets.push_back(it.feedback);
  }
  return b;
}

inline Batch support_batch(const TaskEpisode& ep) { return to_batch(ep.user, ep.support); }
inline Batch query_batch(const TaskEpisode& ep) { return to_batch(ep.user, ep.query); }

/// Number of support items for a user with n interactions: ceil(ratio * n),
/// capped so that at least one item remains for the query set.
inline std::size_t support_size(std::size_t n, double ratio) {
  if (n < 2) return n;
  auto s = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  if (s < 1) s = 1;
  if (s > n - 1) s = n - 1;
  return s;
}

}  // namespace paml::tasks
