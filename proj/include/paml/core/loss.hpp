#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "paml/core/model.hpp"
#include "paml/error.hpp"

namespace paml {

enum class LossKind { Mse, WeightedNel };

inline LossKind loss_kind_for(OutputKind o) { return o == OutputKind::Rating ? LossKind::Mse : LossKind::WeightedNel; }

/// Mean squared residual.
template <class Scalar>
Scalar mse_loss(std::span<const Scalar> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw InputError("mse: empty batch");
  if (predictions.size() != targets.size()) throw InputError("mse: predictions and targets differ in length");
  Scalar s(0);
  for (std::size_t j = 0; j < predictions.size(); ++j) {
    const Scalar r = predictions[j] - Scalar(targets[j]);
    s += r * r;
  }
  return s / Scalar(static_cast<double>(predictions.size()));
}

/// Mean over items of -w_j * log p_j(label_j), where `probabilities` is a
/// 2 x n matrix of class probabilities and labels are 0 (no click) / 1 (click).
template <class Scalar>
Scalar weighted_nel_loss(const Mat<Scalar>& probabilities, std::span<const double> labels,
                         NelWeights weights = {}) {
  using std::log;
  using std::max;
  const Index n = probabilities.cols();
  if (n == 0) throw InputError("weighted-nel: empty batch");
  if (probabilities.rows() != 2 || static_cast<std::size_t>(n) != labels.size())
    throw InputError("weighted-nel: expected a 2 x n probability matrix matching the labels");
  Scalar s(0);
  for (Index j = 0; j < n; ++j) {
    const int c = labels[static_cast<std::size_t>(j)] > 0.5 ? 1 : 0;
    const double w = c == 1 ? weights.positive : weights.negative;
    const Scalar p = max(probabilities(c, j), Scalar(kProbabilityFloor));
    s -= Scalar(w) * log(p);
  }
  return s / Scalar(static_cast<double>(n));
}

/// Loss of a forward() result under `kind`.
template <class Scalar>
Scalar loss(const Mat<Scalar>& predictions, std::span<const double> targets, LossKind kind, NelWeights weights = {}) {
  if (kind == LossKind::Mse) {
    if (predictions.rows() != 1) throw InputError("mse expects one prediction row");
    return mse_loss<Scalar>(std::span<const Scalar>(predictions.data(), static_cast<std::size_t>(predictions.cols())),
                            targets);
  }
  return weighted_nel_loss(predictions, targets, weights);
}

namespace detail {

// Loss value and dL/dlogits for the output head.
template <class Scalar>
Scalar head_loss_grad(const Mat<Scalar>& logits, const Batch& batch, const ModelSpec& spec, Mat<Scalar>& dlogits) {
  using std::log;
  const Index n = logits.cols();
  if (n == 0) throw InputError("loss of an empty batch");
  if (static_cast<Index>(batch.targets.size()) != n) throw InputError("targets and items differ in length");
  const Scalar inv_n = Scalar(1) / Scalar(static_cast<double>(n));
  dlogits.resize(logits.rows(), n);
  Scalar total(0);
  if (spec.output == OutputKind::Rating) {
    for (Index j = 0; j < n; ++j) {
      const Scalar r = logits(0, j) - Scalar(batch.targets[static_cast<std::size_t>(j)]);
      total += r * r;
      dlogits(0, j) = Scalar(2) * r * inv_n;
    }
    return total * inv_n;
  }
  const Mat<Scalar> p = softmax(logits);
  for (Index j = 0; j < n; ++j) {
    const int c = batch.targets[static_cast<std::size_t>(j)] > 0.5 ? 1 : 0;
    const Scalar w(c == 1 ? spec.nel_weights.positive : spec.nel_weights.negative);
    if (p(c, j) > Scalar(kProbabilityFloor)) {
      total -= w * log(p(c, j));
      dlogits.col(j) = w * inv_n * p.col(j);
      dlogits(c, j) -= w * inv_n;
    } else {
      // clamped region: constant loss, zero derivative
      total -= w * log(Scalar(kProbabilityFloor));
      dlogits.col(j).setZero();
    }
  }
  return total * inv_n;
}

// Directional derivative of dL/dlogits along the logit tangent `rlogits`.
template <class Scalar>
Mat<Scalar> head_grad_tangent(const Mat<Scalar>& logits, const Mat<Scalar>& rlogits, const Batch& batch,
                              const ModelSpec& spec) {
  const Index n = logits.cols();
  const Scalar inv_n = Scalar(1) / Scalar(static_cast<double>(n));
  if (spec.output == OutputKind::Rating) return Scalar(2) * inv_n * rlogits;
  const Mat<Scalar> p = softmax(logits);
  Mat<Scalar> out(logits.rows(), n);
  for (Index j = 0; j < n; ++j) {
    const int c = batch.targets[static_cast<std::size_t>(j)] > 0.5 ? 1 : 0;
    if (!(p(c, j) > Scalar(kProbabilityFloor))) {
      out.col(j).setZero();
      continue;
    }
    const Scalar w(c == 1 ? spec.nel_weights.positive : spec.nel_weights.negative);
    const Scalar dot = p.col(j).dot(rlogits.col(j));
    out.col(j) = w * inv_n * (p.col(j).cwiseProduct(rlogits.col(j)) - dot * p.col(j));
  }
  return out;
}

}  // namespace detail
}  // namespace paml
