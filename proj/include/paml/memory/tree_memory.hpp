#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "paml/memory/kd_tree.hpp"

namespace paml::memory {

struct MemoryNode {
  std::uint64_t id = 0;
  Eigen::VectorXd embedding;
  double lr = 0;               // kept in [0, 1]
  std::uint64_t recency = 0;   // counter value of the last store or search hit
  std::uint64_t uses = 0;      // number of stores and search hits

  bool operator==(const MemoryNode& o) const {
    return id == o.id && embedding.size() == o.embedding.size() && embedding == o.embedding && lr == o.lr &&
           recency == o.recency && uses == o.uses;
  }
};

enum class SearchMode { Exact, Approximate };
enum class Eviction { LeastRecentlyUsed, LeastFrequentlyUsed };

struct TreeConfig {
  std::size_t capacity = 10000;
  SearchMode mode = SearchMode::Approximate;
  std::size_t k_train = 20;
  std::size_t k_infer = 5;
  double delta = 2.0;
  double sigma = 1e-5;
  Eviction eviction = Eviction::LeastRecentlyUsed;
  ForestParams forest{};
  std::size_t exact_leaf_size = 8;
};

/// A search result: the node's id with a snapshot of its contents.
struct Hit {
  std::uint64_t id = 0;
  double squared_distance = 0;
  Eigen::VectorXd embedding;
  double lr = 0;
};

/// Descent step for one stored node.
struct NodeGradient {
  std::uint64_t id = 0;
  Eigen::VectorXd embedding;
  double lr = 0;
};

/// User-embedding memory with a spatial index over the stored embeddings.
///
/// Mutations (store, update, evict) mark the index stale; it is rebuilt in
/// one go by commit() or lazily by the next search(). query() is the const
/// read path and refuses to run against a stale index.
class TreeMemory {
 public:
  TreeMemory() = default;
  TreeMemory(Eigen::Index dim, TreeConfig config);

  /// Inserts (h, lr), evicting first when full. Returns the new node id.
  std::uint64_t store_node(const Eigen::VectorXd& h, double lr);

  /// K nearest nodes; bumps the recency of every returned node.
  std::vector<Hit> search(const Eigen::VectorXd& h, std::size_t k);

  /// K nearest nodes without touching recency. Requires a committed index.
  std::vector<Hit> query(const Eigen::VectorXd& h, std::size_t k) const;

  /// One descent step on the listed nodes: embedding -= beta * g, lr -= beta * g_lr (clamped to [0, 1]).
  void update_nodes(const std::vector<NodeGradient>& grads, double beta);

  void commit();
  bool stale() const { return stale_; }

  std::size_t size() const { return nodes_.size(); }
  Eigen::Index dim() const { return dim_; }
  const TreeConfig& config() const { return config_; }
  const std::vector<MemoryNode>& nodes() const { return nodes_; }
  std::size_t evictions() const { return evictions_; }
  std::uint64_t counter() const { return counter_; }
  std::optional<std::size_t> find(std::uint64_t id) const;

  /// Visited-point count of the last search/query.
  const SearchStats& last_stats() const { return last_stats_; }

  /// Text dump with hex-float values; load() restores an identical memory.
  void save(const std::filesystem::path& path) const;
  static TreeMemory load(const std::filesystem::path& path, TreeConfig config);

  bool operator==(const TreeMemory& o) const;

 private:
  std::vector<Neighbor> raw_search(const Eigen::VectorXd& h, std::size_t k) const;
  std::size_t victim() const;

  Eigen::Index dim_ = 0;
  TreeConfig config_{};
  std::vector<MemoryNode> nodes_;
  std::uint64_t next_id_ = 1;
  std::uint64_t counter_ = 0;
  std::size_t evictions_ = 0;
  bool stale_ = false;
  KdTree exact_;
  RandomizedKdForest forest_;
  mutable SearchStats last_stats_{};
};

}  // namespace paml::memory
