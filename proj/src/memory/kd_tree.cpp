#include "paml/memory/kd_tree.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

#include "paml/error.hpp"

namespace paml::memory {
namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  if (a.squared_distance != b.squared_distance) return a.squared_distance < b.squared_distance;
  return a.index < b.index;
}

// Keeps `best` sorted and at most k long.
void offer(std::vector<Neighbor>& best, std::size_t k, Neighbor n) {
  if (best.size() == k && !closer(n, best.back())) return;
  best.insert(std::upper_bound(best.begin(), best.end(), n, closer), n);
  if (best.size() > k) best.pop_back();
}

void check_query(const Eigen::MatrixXd& points, const Eigen::VectorXd& query, std::size_t k) {
  if (k == 0) throw InputError("knn: k must be at least 1");
  if (points.cols() == 0) throw InputError("knn: empty point set");
  if (query.size() != points.rows()) throw InputError("knn: query dimension mismatch");
}

}  // namespace

std::vector<Neighbor> brute_force_knn(const Eigen::MatrixXd& points, const Eigen::VectorXd& query, std::size_t k,
                                      SearchStats* stats) {
  check_query(points, query, k);
  std::vector<Neighbor> best;
  for (Eigen::Index j = 0; j < points.cols(); ++j)
    offer(best, k, {static_cast<std::size_t>(j), (points.col(j) - query).squaredNorm()});
  if (stats) stats->points += static_cast<std::size_t>(points.cols());
  return best;
}

KdTree::KdTree(Eigen::MatrixXd points, std::size_t leaf_size) : points_(std::move(points)), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  perm_.resize(static_cast<std::size_t>(points_.cols()));
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  if (!perm_.empty()) build(0, perm_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{-1, 0, -1, -1, begin, end});
  if (end - begin <= leaf_size_) return id;

  int best_dim = -1;
  double best_spread = 0;
  for (Eigen::Index d = 0; d < points_.rows(); ++d) {
    double lo = points_(d, static_cast<Eigen::Index>(perm_[begin])), hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      const double v = points_(d, static_cast<Eigen::Index>(perm_[i]));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = static_cast<int>(d);
    }
  }
  if (best_dim < 0) return id;  // all points identical

  const std::size_t mid = begin + (end - begin) / 2;
  auto value = [&](std::size_t i) { return points_(best_dim, static_cast<Eigen::Index>(i)); };
  std::nth_element(perm_.begin() + static_cast<std::ptrdiff_t>(begin), perm_.begin() + static_cast<std::ptrdiff_t>(mid),
                   perm_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) { return value(a) < value(b); });
  const double split = value(perm_[mid]);
  // left holds values <= split, right values >= split
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)].dim = best_dim;
  nodes_[static_cast<std::size_t>(id)].split = split;
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

void KdTree::search(int node_id, const Eigen::VectorXd& q, std::size_t k, std::vector<Neighbor>& best,
                    SearchStats& stats) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  ++stats.nodes;
  if (node.dim < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t p = perm_[i];
      offer(best, k, {p, (points_.col(static_cast<Eigen::Index>(p)) - q).squaredNorm()});
    }
    stats.points += node.end - node.begin;
    return;
  }
  const double diff = q(node.dim) - node.split;
  const int near = diff < 0 ? node.left : node.right;
  const int far = diff < 0 ? node.right : node.left;
  search(near, q, k, best, stats);
  // equality still descends so that equidistant points resolve by index
  if (best.size() < k || diff * diff <= best.back().squared_distance) search(far, q, k, best, stats);
}

std::vector<Neighbor> KdTree::knn(const Eigen::VectorXd& query, std::size_t k, SearchStats* stats) const {
  check_query(points_, query, k);
  std::vector<Neighbor> best;
  SearchStats local;
  search(0, query, k, best, local);
  if (stats) {
    stats->points += local.points;
    stats->nodes += local.nodes;
  }
  return best;
}

RandomizedKdForest::RandomizedKdForest(Eigen::MatrixXd points, ForestParams params)
    : points_(std::move(points)), params_(params) {
  if (params_.trees < 1 || params_.top_dims < 1 || params_.checks < 1)
    throw InputError("forest parameters must be positive");
  params_.leaf_size = std::max<std::size_t>(1, params_.leaf_size);
  std::mt19937_64 rng(params_.seed);
  trees_.resize(static_cast<std::size_t>(params_.trees));
  for (Tree& t : trees_) {
    t.perm.resize(static_cast<std::size_t>(points_.cols()));
    std::iota(t.perm.begin(), t.perm.end(), std::size_t{0});
    if (!t.perm.empty()) build(t, 0, t.perm.size(), rng);
  }
}

int RandomizedKdForest::build(Tree& tree, std::size_t begin, std::size_t end, std::mt19937_64& rng) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(Node{-1, 0, -1, -1, begin, end});
  if (end - begin <= params_.leaf_size) return id;

  // mean and variance from (at most) the first 100 points of the node
  const std::size_t sample = std::min<std::size_t>(100, end - begin);
  const Eigen::Index dims = points_.rows();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dims);
  for (std::size_t i = begin; i < begin + sample; ++i) mean += points_.col(static_cast<Eigen::Index>(tree.perm[i]));
  mean /= static_cast<double>(sample);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dims);
  for (std::size_t i = begin; i < begin + sample; ++i)
    var += (points_.col(static_cast<Eigen::Index>(tree.perm[i])) - mean).array().square().matrix();

  std::vector<int> order(static_cast<std::size_t>(dims));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return var(a) > var(b); });
  const int top = std::min<int>(params_.top_dims, static_cast<int>(dims));
  std::uniform_int_distribution<int> pick(0, top - 1);
  const int dim = order[static_cast<std::size_t>(pick(rng))];
  double split = mean(dim);

  auto value = [&](std::size_t i) { return points_(dim, static_cast<Eigen::Index>(i)); };
  auto first = tree.perm.begin() + static_cast<std::ptrdiff_t>(begin);
  auto last = tree.perm.begin() + static_cast<std::ptrdiff_t>(end);
  auto mid_it = std::partition(first, last, [&](std::size_t i) { return value(i) < split; });
  if (mid_it == first || mid_it == last) {
    // degenerate mean split: fall back to the median
    mid_it = first + (last - first) / 2;
    std::nth_element(first, mid_it, last, [&](std::size_t a, std::size_t b) { return value(a) < value(b); });
    split = value(*mid_it);
    if (value(*first) == value(*(last - 1))) return id;
  }
  const std::size_t mid = static_cast<std::size_t>(mid_it - tree.perm.begin());
  const int left = build(tree, begin, mid, rng);
  const int right = build(tree, mid, end, rng);
  Node& n = tree.nodes[static_cast<std::size_t>(id)];
  n.dim = dim;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

std::vector<Neighbor> RandomizedKdForest::knn(const Eigen::VectorXd& query, std::size_t k, SearchStats* stats) const {
  check_query(points_, query, k);
  struct Branch {
    double bound;
    std::size_t tree;
    int node;
    bool operator>(const Branch& o) const {
      if (bound != o.bound) return bound > o.bound;
      if (tree != o.tree) return tree > o.tree;
      return node > o.node;
    }
  };
  std::priority_queue<Branch, std::vector<Branch>, std::greater<>> heap;
  std::vector<char> seen(static_cast<std::size_t>(points_.cols()), 0);
  std::vector<Neighbor> best;
  SearchStats local;
  int leaves = 0;

  auto descend = [&](std::size_t t, int node_id, double bound) {
    const Tree& tree = trees_[t];
    while (true) {
      const Node& node = tree.nodes[static_cast<std::size_t>(node_id)];
      ++local.nodes;
      if (node.dim < 0) {
        ++leaves;
        for (std::size_t i = node.begin; i < node.end; ++i) {
          const std::size_t p = tree.perm[i];
          if (seen[p]) continue;
          seen[p] = 1;
          ++local.points;
          offer(best, k, {p, (points_.col(static_cast<Eigen::Index>(p)) - query).squaredNorm()});
        }
        return;
      }
      const double diff = query(node.dim) - node.split;
      const int near = diff < 0 ? node.left : node.right;
      const int far = diff < 0 ? node.right : node.left;
      heap.push({bound + diff * diff, t, far});
      node_id = near;
    }
  };

  for (std::size_t t = 0; t < trees_.size(); ++t) descend(t, 0, 0.0);
  while (!heap.empty() && (leaves < params_.checks || best.size() < k)) {
    const Branch b = heap.top();
    heap.pop();
    if (best.size() == k && b.bound > best.back().squared_distance) break;
    descend(b.tree, b.node, b.bound);
  }
  if (stats) {
    stats->points += local.points;
    stats->nodes += local.nodes;
  }
  return best;
}

}  // namespace paml::memory
