#include "paml/tasks/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "paml/error.hpp"
#include "paml/tasks/synthetic.hpp"

namespace paml::tasks {
namespace {

constexpr std::array<int, 7> kAgeBuckets{1, 18, 25, 35, 45, 50, 56};
constexpr int kOccupations = 21;

bool valid_zip(const std::string& zip) {
  if (zip.size() < 5) return false;
  return std::all_of(zip.begin(), zip.begin() + 5, [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

}  // namespace

RawDataset encode_movielens(const MovieLensRaw& raw) {
  RawDataset out;
  out.output = OutputKind::Rating;
  out.user_slots = {"gender", "age", "occupation", "zipcode"};
  out.item_slots = {"genre"};

  std::set<std::string> genre_names;
  for (const auto& m : raw.movies)
    for (const auto& g : m.genres) genre_names.insert(g);
  std::map<std::string, int> genre_id;
  for (const auto& g : genre_names) genre_id.emplace(g, static_cast<int>(genre_id.size()));

  std::set<std::string> zips;
  for (const auto& u : raw.users)
    if (valid_zip(u.zip)) zips.insert(u.zip.substr(0, 5));
  std::map<std::string, int> zip_id;
  for (const auto& z : zips) zip_id.emplace(z, static_cast<int>(zip_id.size()));

  out.user_vocab = {2, static_cast<int>(kAgeBuckets.size()), kOccupations, std::max<int>(1, static_cast<int>(zips.size()))};
  out.item_vocab = {std::max<int>(1, static_cast<int>(genre_names.size()))};

  std::unordered_map<int, FeatureRow> movie_features;
  for (const auto& m : raw.movies) {
    FeatureBag bag;
    for (const auto& g : m.genres) bag.push_back(genre_id.at(g));
    std::sort(bag.begin(), bag.end());
    movie_features[m.movie_id] = FeatureRow{bag};
  }

  std::vector<MovieLensUser> users = raw.users;
  std::sort(users.begin(), users.end(), [](const auto& a, const auto& b) { return a.user_id < b.user_id; });
  std::unordered_map<int, std::size_t> slot;
  for (const auto& u : users) {
    if (slot.count(u.user_id)) continue;
    UserRecord rec;
    rec.profile.user_id = u.user_id;
    int gender = u.gender == "F" ? 0 : u.gender == "M" ? 1 : -1;
    const auto age_it = std::find(kAgeBuckets.begin(), kAgeBuckets.end(), u.age);
    int age = age_it == kAgeBuckets.end() ? -1 : static_cast<int>(age_it - kAgeBuckets.begin());
    int occupation = u.occupation >= 0 && u.occupation < kOccupations ? u.occupation : -1;
    int zip = valid_zip(u.zip) ? zip_id.at(u.zip.substr(0, 5)) : -1;
    rec.features_valid = gender >= 0 && age >= 0 && occupation >= 0 && zip >= 0;
    rec.profile.features = {{std::max(gender, 0)}, {std::max(age, 0)}, {std::max(occupation, 0)}, {std::max(zip, 0)}};
    slot.emplace(u.user_id, out.users.size());
    out.users.push_back(std::move(rec));
  }

  std::vector<MovieLensRating> ratings = raw.ratings;
  std::sort(ratings.begin(), ratings.end(), [](const auto& a, const auto& b) {
    return std::tie(a.user_id, a.timestamp, a.movie_id) < std::tie(b.user_id, b.timestamp, b.movie_id);
  });
  for (const auto& r : ratings) {
    const auto u = slot.find(r.user_id);
    const auto m = movie_features.find(r.movie_id);
    if (u == slot.end() || m == movie_features.end()) continue;
    Interaction it;
    it.item_id = r.movie_id;
    it.features = m->second;
    it.feedback = r.rating;
    it.timestamp = r.timestamp;
    out.users[u->second].interactions.push_back(std::move(it));
  }
  return out;
}

std::vector<std::size_t> select_cold_start(const std::vector<UserRecord>& users, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("cold_start_fraction must lie in (0, 1]");
  std::vector<std::size_t> order(users.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto na = users[a].interactions.size();
    const auto nb = users[b].interactions.size();
    if (na != nb) return na < nb;
    return users[a].profile.user_id < users[b].profile.user_id;
  });
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(users.size()) + 1e-9));
  order.resize(keep);
  return order;
}

DatasetSplits preprocess(const RawDataset& raw, const PreprocessConfig& config, PreprocessStats* stats) {
  if (raw.users.empty()) throw DataError("preprocess: dataset has no users");
  PreprocessStats st;
  st.raw_users = raw.users.size();
  const auto cold = select_cold_start(raw.users, config.cold_start_fraction);
  st.cold_start_users = cold.size();

  std::vector<std::size_t> kept;
  for (std::size_t i : cold) {
    const UserRecord& u = raw.users[i];
    if (!u.features_valid) {
      ++st.removed_features;
      continue;
    }
    if (u.profile.age && (*u.profile.age < config.min_age || *u.profile.age > config.max_age)) {
      ++st.removed_age;
      continue;
    }
    if (u.interactions.size() < std::max<std::size_t>(config.min_items, 2)) {
      ++st.removed_items;
      continue;
    }
    kept.push_back(i);
  }
  if (kept.empty()) throw DataError("preprocess: every user was filtered out");
  std::sort(kept.begin(), kept.end(),
            [&](std::size_t a, std::size_t b) { return raw.users[a].profile.user_id < raw.users[b].profile.user_id; });

  std::mt19937_64 rng(config.seed);
  if (config.max_users > 0 && kept.size() > config.max_users) {
    std::shuffle(kept.begin(), kept.end(), rng);
    kept.resize(config.max_users);
    std::sort(kept.begin(), kept.end(),
              [&](std::size_t a, std::size_t b) { return raw.users[a].profile.user_id < raw.users[b].profile.user_id; });
  }
  st.kept_users = kept.size();

  std::vector<TaskEpisode> episodes;
  episodes.reserve(kept.size());
  for (std::size_t i : kept) {
    const UserRecord& u = raw.users[i];
    std::vector<Interaction> items = u.interactions;
    std::shuffle(items.begin(), items.end(), rng);
    const std::size_t s = support_size(items.size(), config.support_ratio);
    TaskEpisode ep;
    ep.user = u.profile;
    ep.support.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(s));
    ep.query.assign(items.begin() + static_cast<std::ptrdiff_t>(s), items.end());
    episodes.push_back(std::move(ep));
  }
  std::shuffle(episodes.begin(), episodes.end(), rng);

  const auto counts = split_counts(episodes.size(), config.split);
  DatasetSplits out;
  auto it = std::make_move_iterator(episodes.begin());
  out.train.assign(it, it + static_cast<std::ptrdiff_t>(counts[0]));
  it += static_cast<std::ptrdiff_t>(counts[0]);
  out.validation.assign(it, it + static_cast<std::ptrdiff_t>(counts[1]));
  it += static_cast<std::ptrdiff_t>(counts[1]);
  out.test.assign(it, std::make_move_iterator(episodes.end()));
  out.user_slots = raw.user_slots;
  out.item_slots = raw.item_slots;
  out.user_vocab = raw.user_vocab;
  out.item_vocab = raw.item_vocab;
  out.output = raw.output;
  if (stats) *stats = st;
  return out;
}

std::vector<int> top_value_set(const std::map<int, std::size_t>& counts) {
  std::vector<std::pair<int, std::size_t>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const double fraction = v.size() == 2 ? 0.5 : 0.3;
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(v.size()) - 1e-9));
  std::vector<int> out;
  for (std::size_t i = 0; i < k && i < v.size(); ++i) out.push_back(v[i].first);
  std::sort(out.begin(), out.end());
  return out;
}

int count_top_features(const UserProfile& user, const std::vector<std::vector<int>>& top_sets) {
  int n = 0;
  for (std::size_t f = 0; f < user.features.size() && f < top_sets.size(); ++f) {
    const auto& top = top_sets[f];
    const bool hit = std::any_of(user.features[f].begin(), user.features[f].end(),
                                 [&](int id) { return std::binary_search(top.begin(), top.end(), id); });
    n += hit ? 1 : 0;
  }
  return n;
}

std::map<int, UserGroup> classify_major_minor(const DatasetSplits& splits) {
  const std::size_t slots = splits.user_vocab.size();
  std::vector<std::map<int, std::size_t>> counts(slots);
  for (const TaskEpisode& ep : splits.train)
    for (std::size_t f = 0; f < slots && f < ep.user.features.size(); ++f)
      for (int id : ep.user.features[f]) ++counts[f][id];
  std::vector<std::vector<int>> top(slots);
  for (std::size_t f = 0; f < slots; ++f) top[f] = top_value_set(counts[f]);

  std::map<int, UserGroup> labels;
  for (const auto* part : {&splits.train, &splits.validation, &splits.test})
    for (const TaskEpisode& ep : *part)
      labels[ep.user.user_id] = count_top_features(ep.user, top) > 2 ? UserGroup::Major : UserGroup::Minor;
  return labels;
}

}  // namespace paml::tasks
