#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace paml::memory {

struct Neighbor {
  std::size_t index = 0;
  double squared_distance = 0;

  bool operator==(const Neighbor&) const = default;
};

/// Work counters for one query.
struct SearchStats {
  std::size_t points = 0;  // distance evaluations
  std::size_t nodes = 0;   // tree nodes entered
};

/// K nearest columns of `points` by scanning all of them; ties by index.
std::vector<Neighbor> brute_force_knn(const Eigen::MatrixXd& points, const Eigen::VectorXd& query, std::size_t k,
                                      SearchStats* stats = nullptr);

/// Exact kd-tree over the columns of a dim x n matrix.
///
/// Splits at the median of the widest dimension. Queries return exactly the
/// brute-force answer, including the index order of equidistant points.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(Eigen::MatrixXd points, std::size_t leaf_size = 8);

  std::vector<Neighbor> knn(const Eigen::VectorXd& query, std::size_t k, SearchStats* stats = nullptr) const;

  std::size_t size() const { return static_cast<std::size_t>(points_.cols()); }
  Eigen::Index dim() const { return points_.rows(); }

 private:
  struct Node {
    int dim = -1;  // -1 marks a leaf
    double split = 0;
    int left = -1;
    int right = -1;
    std::size_t begin = 0;
    std::size_t end = 0;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, const Eigen::VectorXd& q, std::size_t k, std::vector<Neighbor>& best,
              SearchStats& stats) const;

  Eigen::MatrixXd points_;
  std::vector<std::size_t> perm_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_ = 8;
};

struct ForestParams {
  int trees = 4;
  int top_dims = 5;   // split dimension drawn from this many highest-variance dims
  int checks = 64;    // leaves examined per query across all trees
  std::size_t leaf_size = 1;
  std::uint64_t seed = 0;
};

/// Randomized kd-forest with a best-bin-first search over all trees.
/// Results are approximate: only `checks` leaves are examined.
class RandomizedKdForest {
 public:
  RandomizedKdForest() = default;
  RandomizedKdForest(Eigen::MatrixXd points, ForestParams params);

  std::vector<Neighbor> knn(const Eigen::VectorXd& query, std::size_t k, SearchStats* stats = nullptr) const;

  std::size_t size() const { return static_cast<std::size_t>(points_.cols()); }

 private:
  struct Node {
    int dim = -1;
    double split = 0;
    int left = -1;
    int right = -1;
    std::size_t begin = 0;
    std::size_t end = 0;
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<std::size_t> perm;
  };

  int build(Tree& tree, std::size_t begin, std::size_t end, std::mt19937_64& rng);

  Eigen::MatrixXd points_;
  ForestParams params_;
  std::vector<Tree> trees_;
};

}  // namespace paml::memory
