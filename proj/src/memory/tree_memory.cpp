#include "paml/memory/tree_memory.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "paml/error.hpp"

namespace paml::memory {
namespace {

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw DataError("tree dump: bad number '" + s + "'");
  return v;
}

}  // namespace

TreeMemory::TreeMemory(Eigen::Index dim, TreeConfig config) : dim_(dim), config_(config) {
  if (dim <= 0) throw InputError("tree memory: embedding dimension must be positive");
  if (config_.capacity == 0) throw InputError("tree memory: capacity must be positive");
}

std::optional<std::size_t> TreeMemory::find(std::uint64_t id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  return std::nullopt;
}

std::size_t TreeMemory::victim() const {
  std::size_t v = 0;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const MemoryNode& a = nodes_[i];
    const MemoryNode& b = nodes_[v];
    bool older;
    if (config_.eviction == Eviction::LeastRecentlyUsed)
      older = a.recency != b.recency ? a.recency < b.recency : a.id < b.id;
    else
      older = a.uses != b.uses ? a.uses < b.uses : a.recency != b.recency ? a.recency < b.recency : a.id < b.id;
    if (older) v = i;
  }
  return v;
}

std::uint64_t TreeMemory::store_node(const Eigen::VectorXd& h, double lr) {
  if (h.size() != dim_) throw InputError("store_node: embedding dimension mismatch");
  if (!h.allFinite() || !std::isfinite(lr)) throw NumericError("store_node: non-finite embedding or rate");
  if (nodes_.size() >= config_.capacity) {
    nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(victim()));
    ++evictions_;
  }
  MemoryNode n;
  n.id = next_id_++;
  n.embedding = h;
  n.lr = std::clamp(lr, 0.0, 1.0);
  n.recency = ++counter_;
  n.uses = 1;
  nodes_.push_back(std::move(n));
  stale_ = true;
  return nodes_.back().id;
}

void TreeMemory::commit() {
  Eigen::MatrixXd pts(dim_, static_cast<Eigen::Index>(nodes_.size()));
  for (std::size_t i = 0; i < nodes_.size(); ++i) pts.col(static_cast<Eigen::Index>(i)) = nodes_[i].embedding;
  if (config_.mode == SearchMode::Exact)
    exact_ = KdTree(std::move(pts), config_.exact_leaf_size);
  else
    forest_ = RandomizedKdForest(std::move(pts), config_.forest);
  stale_ = false;
}

std::vector<Neighbor> TreeMemory::raw_search(const Eigen::VectorXd& h, std::size_t k) const {
  if (nodes_.empty()) throw InputError("tree memory search on an empty tree");
  if (h.size() != dim_) throw InputError("tree memory search: dimension mismatch");
  if (k == 0) throw InputError("tree memory search: k must be at least 1");
  last_stats_ = {};
  k = std::min(k, nodes_.size());
  return config_.mode == SearchMode::Exact ? exact_.knn(h, k, &last_stats_) : forest_.knn(h, k, &last_stats_);
}

std::vector<Hit> TreeMemory::query(const Eigen::VectorXd& h, std::size_t k) const {
  if (stale_) throw InputError("tree memory index is stale; commit() before query()");
  std::vector<Hit> out;
  for (const Neighbor& n : raw_search(h, k)) {
    const MemoryNode& node = nodes_[n.index];
    out.push_back(Hit{node.id, n.squared_distance, node.embedding, node.lr});
  }
  return out;
}

std::vector<Hit> TreeMemory::search(const Eigen::VectorXd& h, std::size_t k) {
  if (stale_) commit();
  std::vector<Hit> out = query(h, k);
  ++counter_;
  for (const Hit& hit : out) {
    MemoryNode& node = nodes_[*find(hit.id)];
    node.recency = counter_;
    ++node.uses;
  }
  return out;
}

void TreeMemory::update_nodes(const std::vector<NodeGradient>& grads, double beta) {
  if (!std::isfinite(beta)) throw NumericError("update_nodes: non-finite step");
  std::vector<std::size_t> slots;
  slots.reserve(grads.size());
  for (const NodeGradient& g : grads) {
    const auto slot = find(g.id);
    if (!slot) throw InputError("update_nodes: unknown node " + std::to_string(g.id));
    if (g.embedding.size() != dim_) throw InputError("update_nodes: gradient dimension mismatch");
    slots.push_back(*slot);
  }
  if (beta == 0.0) return;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    MemoryNode& node = nodes_[slots[i]];
    node.embedding -= beta * grads[i].embedding;
    node.lr = std::clamp(node.lr - beta * grads[i].lr, 0.0, 1.0);
    if (!node.embedding.allFinite()) throw NumericError("update_nodes: non-finite node embedding");
  }
  if (!grads.empty()) stale_ = true;
}

void TreeMemory::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "paml-tree 1\n";
  out << "dim " << dim_ << " count " << nodes_.size() << " next_id " << next_id_ << " counter " << counter_
      << " evictions " << evictions_ << "\n";
  for (const MemoryNode& n : nodes_) {
    out << n.id << ' ' << n.recency << ' ' << n.uses << ' ' << hex(n.lr);
    for (Eigen::Index d = 0; d < dim_; ++d) out << ' ' << hex(n.embedding(d));
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

TreeMemory TreeMemory::load(const std::filesystem::path& path, TreeConfig config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "paml-tree" || version != 1) throw DataError(path.string() + ": not a tree dump");
  std::string k1, k2, k3, k4, k5;
  Eigen::Index dim = 0;
  std::size_t count = 0;
  TreeMemory t;
  in >> k1 >> dim >> k2 >> count >> k3 >> t.next_id_ >> k4 >> t.counter_ >> k5 >> t.evictions_;
  if (!in || k1 != "dim" || k2 != "count" || k3 != "next_id" || k4 != "counter" || k5 != "evictions")
    throw DataError(path.string() + ": malformed header");
  t.dim_ = dim;
  t.config_ = config;
  for (std::size_t i = 0; i < count; ++i) {
    MemoryNode n;
    std::string lr;
    in >> n.id >> n.recency >> n.uses >> lr;
    n.lr = parse_double(lr);
    n.embedding.resize(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
      std::string v;
      in >> v;
      n.embedding(d) = parse_double(v);
    }
    if (!in) throw DataError(path.string() + ": truncated node list");
    t.nodes_.push_back(std::move(n));
  }
  if (!t.nodes_.empty()) t.commit();
  return t;
}

bool TreeMemory::operator==(const TreeMemory& o) const {
  if (dim_ != o.dim_ || next_id_ != o.next_id_ || counter_ != o.counter_ || evictions_ != o.evictions_ ||
      nodes_.size() != o.nodes_.size())
    return false;
  return nodes_ == o.nodes_;
}

}  // namespace paml::memory
