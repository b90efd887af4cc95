#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "paml/tasks/movielens.hpp"
#include "paml/tasks/types.hpp"

namespace paml::tasks {

/// A user with encoded features and every logged interaction, before
/// cold-start selection and filtering.
struct UserRecord {
  UserProfile profile;
  bool features_valid = true;  // false for blank or garbled feature values
  std::vector<Interaction> interactions;
};

/// Encoded dataset shared by all loaders.
struct RawDataset {
  std::vector<UserRecord> users;
  std::vector<std::string> user_slots;
  std::vector<std::string> item_slots;
  std::vector<int> user_vocab;
  std::vector<int> item_vocab;
  OutputKind output = OutputKind::Rating;
};

/// Encodes MovieLens records: users get (gender, age bucket, occupation, zip),
/// items get a genre bag. A zip that does not start with five digits, or an
/// unknown gender/age/occupation code, marks the user's features invalid.
RawDataset encode_movielens(const MovieLensRaw& raw);

struct PreprocessConfig {
  std::uint64_t seed = 0;
  double cold_start_fraction = 0.8;
  std::size_t min_items = 2;
  std::array<int, 3> split{7, 1, 2};
  double support_ratio = 0.8;
  int min_age = 10;
  int max_age = 100;
  std::size_t max_users = 0;  // seeded subsample after filtering; 0 keeps everyone
};

struct PreprocessStats {
  std::size_t raw_users = 0;
  std::size_t cold_start_users = 0;
  std::size_t removed_features = 0;
  std::size_t removed_age = 0;
  std::size_t removed_items = 0;
  std::size_t kept_users = 0;
};

/// Cold-start selection, filtering, 7:1:2 user split and 80:20 support/query split.
DatasetSplits preprocess(const RawDataset& raw, const PreprocessConfig& config, PreprocessStats* stats = nullptr);

/// Users with the fewest logs: ranks by interaction count (ties by user id)
/// and returns the indices of the first floor(fraction * n).
std::vector<std::size_t> select_cold_start(const std::vector<UserRecord>& users, double fraction);

/// Top value set of one slot: values sorted by user count descending (ties by
/// id ascending), keeping ceil(0.3 * |values|), or ceil(0.5 * |values|) for
/// binary slots.
std::vector<int> top_value_set(const std::map<int, std::size_t>& counts);

/// Major/minor rule: a user with more than two slot values inside the top
/// value sets of the training population is major.
std::map<int, UserGroup> classify_major_minor(const DatasetSplits& splits);

/// Number of a user's slots whose value lies in the top sets.
int count_top_features(const UserProfile& user, const std::vector<std::vector<int>>& top_sets);

}  // namespace paml::tasks
