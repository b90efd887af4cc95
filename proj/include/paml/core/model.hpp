#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "paml/core/param_set.hpp"
#include "paml/error.hpp"

namespace paml {

/// Ids active in one categorical slot. Multi-valued slots (e.g. movie genres)
/// are embedded as the mean of their rows; an empty bag embeds to zero.
using FeatureBag = std::vector<int>;
/// One bag per categorical slot, in the order of the model's vocabularies.
using FeatureRow = std::vector<FeatureBag>;

enum class OutputKind { Rating, Ctr };

/// Class weights of the weighted negative-entropy loss.
struct NelWeights {
  double negative = 0.1;
  double positive = 0.9;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Shape of the decision network and the learning-rate head.
///
/// The decision network embeds every categorical slot, concatenates item and
/// user embeddings per item, and runs `decision_dims` ReLU layers followed by
/// a linear output layer (1 unit for ratings, 2 softmax units for clicks).
struct ModelSpec {
  std::vector<int> user_vocab;
  std::vector<int> item_vocab;
  Index embedding_dim = 32;
  std::vector<Index> decision_dims{320, 192, 5};
  std::vector<Index> lr_dims{64, 32, 1};
  OutputKind output = OutputKind::Rating;
  // When false the decision network only sees item embeddings and the user
  // embedding reaches the model exclusively through the learning-rate head.
  bool user_in_decision = true;
  // ReLU after the last hidden layer of the learning-rate head as well.
  bool lr_relu_last_hidden = false;
  NelWeights nel_weights{};

  Index num_user_slots() const { return static_cast<Index>(user_vocab.size()); }
  Index num_item_slots() const { return static_cast<Index>(item_vocab.size()); }
  Index user_embedding_dim() const { return num_user_slots() * embedding_dim; }
  Index item_embedding_dim() const { return num_item_slots() * embedding_dim; }
  Index decision_input_dim() const {
    return item_embedding_dim() + (user_in_decision ? user_embedding_dim() : 0);
  }
  Index output_dim() const { return output == OutputKind::Rating ? 1 : 2; }
  Index num_hidden() const { return static_cast<Index>(decision_dims.size()); }

  // Block indices inside the theta layout.
  Index user_table(Index slot) const { return slot; }
  Index item_table(Index slot) const { return num_user_slots() + slot; }
  Index hidden_weight(Index l) const { return num_user_slots() + num_item_slots() + 2 * l; }
  Index hidden_bias(Index l) const { return hidden_weight(l) + 1; }
  Index output_weight() const { return hidden_weight(num_hidden()); }
  Index output_bias() const { return output_weight() + 1; }

  void validate() const {
    if (user_vocab.empty() && item_vocab.empty()) throw InputError("model has no feature slots");
    if (embedding_dim <= 0) throw InputError("embedding_dim must be positive");
    for (int v : user_vocab)
      if (v <= 0) throw InputError("user vocabulary sizes must be positive");
    for (int v : item_vocab)
      if (v <= 0) throw InputError("item vocabulary sizes must be positive");
    for (Index d : decision_dims)
      if (d <= 0) throw InputError("decision layer widths must be positive");
    if (decision_input_dim() == 0) throw InputError("decision network has no inputs");
    if (lr_dims.empty() || lr_dims.back() != 1) throw InputError("learning-rate head must end in one unit");
    for (Index d : lr_dims)
      if (d <= 0) throw InputError("learning-rate layer widths must be positive");
    if (user_vocab.empty()) throw InputError("learning-rate head needs at least one user slot");
  }
};

inline std::shared_ptr<const Layout> make_theta_layout(const ModelSpec& spec) {
  spec.validate();
  auto layout = std::make_shared<Layout>();
  for (Index f = 0; f < spec.num_user_slots(); ++f)
    layout->add("user_emb/" + std::to_string(f), spec.embedding_dim, spec.user_vocab[static_cast<std::size_t>(f)]);
  for (Index f = 0; f < spec.num_item_slots(); ++f)
    layout->add("item_emb/" + std::to_string(f), spec.embedding_dim, spec.item_vocab[static_cast<std::size_t>(f)]);
  Index in = spec.decision_input_dim();
  for (Index l = 0; l < spec.num_hidden(); ++l) {
    const Index out = spec.decision_dims[static_cast<std::size_t>(l)];
    layout->add("dec/" + std::to_string(l) + "/W", out, in);
    layout->add("dec/" + std::to_string(l) + "/b", out, 1);
    in = out;
  }
  layout->add("out/W", spec.output_dim(), in);
  layout->add("out/b", spec.output_dim(), 1);
  return layout;
}

/// Items of one user with their supervision targets (rating, or click 0/1).
struct Batch {
  FeatureRow user;
  std::vector<FeatureRow> items;
  std::vector<double> targets;

  Index size() const { return static_cast<Index>(items.size()); }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for dense layers, Uniform(-0.05, 0.05) for embeddings.
inline ParamSet<double> init_theta(const ModelSpec& spec, std::uint64_t seed) {
  ParamSet<double> theta(make_theta_layout(spec));
  std::mt19937_64 rng(seed);
  const auto& blocks = theta.layout()->blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Index bi = static_cast<Index>(i);
    const bool embedding = bi < spec.num_user_slots() + spec.num_item_slots();
    double bound = 0.05;
    if (!embedding) {
      // weights and biases of a layer share the fan-in of the weight block
      const Index weight = (bi - spec.num_user_slots() - spec.num_item_slots()) % 2 == 0 ? bi : bi - 1;
      bound = 1.0 / std::sqrt(static_cast<double>(theta.layout()->block(weight).cols));
    }
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto m = theta.block(bi);
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
  }
  return theta;
}

namespace detail {

template <class Scalar>
void check_finite(const Mat<Scalar>& m, const char* layer) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite values in layer ") + layer);
}

template <class Scalar>
Scalar relu(Scalar x) {
  return x > Scalar(0) ? x : Scalar(0);
}

// Writes the mean embedding of `bag` into `out` (a column segment).
template <class Scalar, class Out>
void embed_bag(const typename ParamSet<Scalar>::ConstMatrixMap& table, const FeatureBag& bag, int vocab,
               Out&& out) {
  out.setZero();
  if (bag.empty()) return;
  for (int id : bag) {
    if (id < 0 || id >= vocab)
      throw InputError("feature id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(vocab));
    out += table.col(id);
  }
  out /= Scalar(static_cast<double>(bag.size()));
}

template <class Scalar, class In>
void scatter_bag(typename ParamSet<Scalar>::MatrixMap table, const FeatureBag& bag, const In& grad) {
  if (bag.empty()) return;
  const Scalar inv = Scalar(1) / Scalar(static_cast<double>(bag.size()));
  for (int id : bag) table.col(id) += inv * grad;
}

}  // namespace detail

/// Concatenated user-slot embeddings (the vector fed to the learning-rate head).
template <class Scalar>
Vec<Scalar> user_embedding(const ParamSet<Scalar>& theta, const ModelSpec& spec, const FeatureRow& user) {
  if (static_cast<Index>(user.size()) != spec.num_user_slots())
    throw InputError("user has " + std::to_string(user.size()) + " slots, model expects " +
                     std::to_string(spec.num_user_slots()));
  const Index d = spec.embedding_dim;
  Vec<Scalar> h(spec.user_embedding_dim());
  for (Index f = 0; f < spec.num_user_slots(); ++f)
    detail::embed_bag<Scalar>(theta.block(spec.user_table(f)), user[static_cast<std::size_t>(f)],
                              spec.user_vocab[static_cast<std::size_t>(f)], h.segment(f * d, d));
  return h;
}

/// Adds dL/dh into the user embedding tables of `grad`.
template <class Scalar>
void accumulate_user_embedding_grad(const ModelSpec& spec, const FeatureRow& user, const Vec<Scalar>& dh,
                                    ParamSet<Scalar>& grad) {
  const Index d = spec.embedding_dim;
  for (Index f = 0; f < spec.num_user_slots(); ++f)
    detail::scatter_bag<Scalar>(grad.block(spec.user_table(f)), user[static_cast<std::size_t>(f)],
                                dh.segment(f * d, d));
}

/// Everything the backward passes need from a forward evaluation.
template <class Scalar>
struct Tape {
  Vec<Scalar> user;
  Mat<Scalar> input;
  std::vector<Mat<Scalar>> pre;
  std::vector<Mat<Scalar>> act;
  Mat<Scalar> logits;
};

template <class Scalar>
Tape<Scalar> forward_tape(const ParamSet<Scalar>& theta, const ModelSpec& spec, const Batch& batch,
                          bool check = false) {
  if (*theta.layout() != *make_theta_layout(spec))
    throw InputError("parameters do not match the model specification");
  Tape<Scalar> t;
  const Index n = batch.size();
  const Index d = spec.embedding_dim;
  t.user = user_embedding(theta, spec, batch.user);
  t.input.resize(spec.decision_input_dim(), n);
  const Index item_dim = spec.item_embedding_dim();
  for (Index j = 0; j < n; ++j) {
    const FeatureRow& item = batch.items[static_cast<std::size_t>(j)];
    if (static_cast<Index>(item.size()) != spec.num_item_slots())
      throw InputError("item has " + std::to_string(item.size()) + " slots, model expects " +
                       std::to_string(spec.num_item_slots()));
    for (Index f = 0; f < spec.num_item_slots(); ++f)
      detail::embed_bag<Scalar>(theta.block(spec.item_table(f)), item[static_cast<std::size_t>(f)],
                                spec.item_vocab[static_cast<std::size_t>(f)], t.input.col(j).segment(f * d, d));
    if (spec.user_in_decision) t.input.col(j).segment(item_dim, spec.user_embedding_dim()) = t.user;
  }
  const Mat<Scalar>* prev = &t.input;
  t.pre.resize(static_cast<std::size_t>(spec.num_hidden()));
  t.act.resize(static_cast<std::size_t>(spec.num_hidden()));
  for (Index l = 0; l < spec.num_hidden(); ++l) {
    auto& pre = t.pre[static_cast<std::size_t>(l)];
    pre = theta.block(spec.hidden_weight(l)) * (*prev);
    pre.colwise() += theta.block(spec.hidden_bias(l)).col(0);
    auto& act = t.act[static_cast<std::size_t>(l)];
    act = pre.unaryExpr([](Scalar x) { return detail::relu(x); });
    if (check) detail::check_finite(act, ("dec/" + std::to_string(l)).c_str());
    prev = &act;
  }
  t.logits = theta.block(spec.output_weight()) * (*prev);
  t.logits.colwise() += theta.block(spec.output_bias()).col(0);
  if (check) detail::check_finite(t.logits, "out");
  return t;
}

/// Column-wise softmax.
template <class Scalar>
Mat<Scalar> softmax(const Mat<Scalar>& logits) {
  using std::exp;
  Mat<Scalar> p(logits.rows(), logits.cols());
  for (Index j = 0; j < logits.cols(); ++j) {
    const Scalar m = logits.col(j).maxCoeff();
    Scalar z(0);
    for (Index c = 0; c < logits.rows(); ++c) {
      p(c, j) = exp(logits(c, j) - m);
      z += p(c, j);
    }
    p.col(j) /= z;
  }
  return p;
}

/// Model output plus the user embedding.
///
/// `values` is 1 x n raw ratings or 2 x n class probabilities (row 1 = click).
template <class Scalar>
struct Prediction {
  Mat<Scalar> values;
  Vec<Scalar> user_embedding;
};

template <class Scalar>
Prediction<Scalar> forward(const ParamSet<Scalar>& theta, const ModelSpec& spec, const Batch& batch) {
  Tape<Scalar> t = forward_tape(theta, spec, batch);
  Prediction<Scalar> p;
  p.values = spec.output == OutputKind::Rating ? t.logits : softmax(t.logits);
  p.user_embedding = std::move(t.user);
  return p;
}

}  // namespace paml
