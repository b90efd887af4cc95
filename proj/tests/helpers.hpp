#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "paml/core/autodiff.hpp"

namespace testing {

using paml::Batch;
using paml::FeatureRow;
using paml::Index;
using paml::ModelSpec;
using paml::OutputKind;
using paml::ParamSet;

// Two user slots, two item slots (the second multi-valued), tiny layers.
inline ModelSpec small_spec(OutputKind out = OutputKind::Rating, bool user_in_decision = true) {
  ModelSpec s;
  s.user_vocab = {3, 4};
  s.item_vocab = {5, 6};
  s.embedding_dim = 3;
  s.decision_dims = {6, 4};
  s.lr_dims = {5, 3, 1};
  s.output = out;
  s.user_in_decision = user_in_decision;
  return s;
}

inline Batch random_batch(const ModelSpec& spec, std::mt19937_64& rng, int n_items) {
  Batch b;
  for (int v : spec.user_vocab) b.user.push_back({std::uniform_int_distribution<int>(0, v - 1)(rng)});
  for (int j = 0; j < n_items; ++j) {
    FeatureRow item;
    for (std::size_t f = 0; f < spec.item_vocab.size(); ++f) {
      const int v = spec.item_vocab[f];
      paml::FeatureBag bag{std::uniform_int_distribution<int>(0, v - 1)(rng)};
      if (f == 1 && rng() % 2) bag.push_back(std::uniform_int_distribution<int>(0, v - 1)(rng));
      item.push_back(bag);
    }
    b.items.push_back(item);
    if (spec.output == OutputKind::Rating)
      b.targets.push_back(std::uniform_int_distribution<int>(1, 5)(rng));
    else
      b.targets.push_back(static_cast<double>(rng() % 2));
  }
  return b;
}

// Initial weights are small; scale them up so every layer carries signal.
inline ParamSet<double> random_theta(const ModelSpec& spec, std::uint64_t seed, double scale = 1.0) {
  ParamSet<double> t = paml::init_theta(spec, seed);
  std::mt19937_64 rng(seed + 7);
  std::normal_distribution<double> n(0.0, scale);
  for (Index k = 0; k < t.total_dim(); ++k) t.flat()(k) = n(rng);
  return t;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central finite-difference gradient of f at x, evaluated in long double.
template <class F>
Eigen::VectorXd fd_gradient(F&& f, const Eigen::Matrix<long double, Eigen::Dynamic, 1>& x, long double h) {
  Eigen::VectorXd g(x.size());
  Eigen::Matrix<long double, Eigen::Dynamic, 1> y = x;
  for (Index i = 0; i < x.size(); ++i) {
    y(i) = x(i) + h;
    const long double fp = f(y);
    y(i) = x(i) - h;
    const long double fm = f(y);
    y(i) = x(i);
    g(i) = static_cast<double>((fp - fm) / (2 * h));
  }
  return g;
}

}  // namespace testing

#include <filesystem>
#include <fstream>
#include <string>

namespace testing {

// Fresh scratch directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("paml-test-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name, std::ios::binary) << text;
    return path / name;
  }
};

}  // namespace testing

#include "paml/meta/episode.hpp"
#include "paml/tasks/synthetic.hpp"

namespace testing {

// About fifty parameters: 29 in theta, 20 in the learning-rate head.
inline ModelSpec tiny_spec(OutputKind out = OutputKind::Rating) {
  ModelSpec s;
  s.user_vocab = {2};
  s.item_vocab = {3};
  s.embedding_dim = 2;
  s.decision_dims = {3};
  s.lr_dims = {3, 2, 1};
  s.output = out;
  return s;
}

template <class T>
paml::meta::EpisodeSetup<T> cast_setup(const paml::meta::EpisodeSetup<double>& s) {
  paml::meta::EpisodeSetup<T> o;
  o.algorithm = s.algorithm;
  o.spec = s.spec;
  o.head = s.head;
  o.fixed_alpha = static_cast<T>(s.fixed_alpha);
  o.gamma = static_cast<T>(s.gamma);
  o.warmup = s.warmup;
  for (const auto& n : s.nodes) o.nodes.push_back(n.cast<T>());
  for (double l : s.node_lrs) o.node_lrs.push_back(static_cast<T>(l));
  o.delta = static_cast<T>(s.delta);
  o.sigma = static_cast<T>(s.sigma);
  return o;
}

// Synthetic two-group data with the matching model spec.
struct SyntheticFixture {
  paml::tasks::DatasetSplits data;
  ModelSpec spec;
  explicit SyntheticFixture(std::size_t n_tasks = 60, std::uint64_t seed = 1, double x1 = 0.0, double x2 = 1.0) {
    paml::tasks::TwoGroupParams p;
    p.x1 = x1;
    p.x2 = x2;
    p.n_tasks = n_tasks;
    p.seed = seed;
    data = paml::tasks::synthetic_splits(p);
    spec.user_vocab = data.user_vocab;
    spec.item_vocab = data.item_vocab;
    spec.embedding_dim = 4;
    spec.decision_dims = {8};
    spec.lr_dims = {6, 4, 1};
    spec.user_in_decision = false;
  }
};

}  // namespace testing
