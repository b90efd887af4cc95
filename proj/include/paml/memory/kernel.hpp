#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "paml/core/param_set.hpp"
#include "paml/error.hpp"

namespace paml::memory {

/// Gaussian kernel exp(-delta * |a - b|^2).
template <class Scalar>
Scalar kernel_similarity(const Vec<Scalar>& a, const Vec<Scalar>& b, Scalar delta) {
  using std::exp;
  if (a.size() != b.size()) throw InputError("kernel_similarity: dimension mismatch");
  return exp(-delta * (a - b).squaredNorm());
}

/// Kernel-weighted learning rate sum_k s_k / (sum_j s_j + sigma) * lr_k.
template <class Scalar>
Scalar blend_lr(std::span<const Scalar> similarities, std::span<const Scalar> lrs, Scalar sigma) {
  if (similarities.empty()) throw InputError("blend_lr: no neighbours");
  if (similarities.size() != lrs.size()) throw InputError("blend_lr: similarities and learning rates differ in length");
  Scalar denom = sigma;
  for (Scalar s : similarities) denom += s;
  Scalar out(0);
  for (std::size_t k = 0; k < lrs.size(); ++k) out += similarities[k] / denom * lrs[k];
  return out;
}

/// A neighbour as seen by the blend: stored embedding and stored learning rate.
struct BlendInput {
  Vec<double> embedding;
  double lr = 0;
};

struct BlendResult {
  double alpha_tilde = 0;
  std::vector<double> similarities;
};

/// Gradients of alpha_tilde (scaled by an upstream derivative) with respect
/// to the query embedding, each neighbour embedding and each stored rate.
struct BlendGradient {
  Vec<double> query;
  std::vector<Vec<double>> embeddings;
  std::vector<double> lrs;
};

inline BlendResult blend_forward(const Vec<double>& h, std::span<const BlendInput> neighbours, double delta,
                                 double sigma) {
  BlendResult r;
  r.similarities.reserve(neighbours.size());
  for (const auto& n : neighbours) r.similarities.push_back(kernel_similarity(h, n.embedding, delta));
  std::vector<double> lrs;
  lrs.reserve(neighbours.size());
  for (const auto& n : neighbours) lrs.push_back(n.lr);
  r.alpha_tilde = blend_lr<double>(r.similarities, lrs, sigma);
  return r;
}

inline BlendGradient blend_backward(const Vec<double>& h, std::span<const BlendInput> neighbours,
                                    const BlendResult& fwd, double delta, double sigma, double upstream) {
  BlendGradient g;
  g.query = Vec<double>::Zero(h.size());
  double denom = sigma;
  for (double s : fwd.similarities) denom += s;
  for (std::size_t k = 0; k < neighbours.size(); ++k) {
    const double s = fwd.similarities[k];
    // d alpha_tilde / d s_k = (lr_k - alpha_tilde) / denom
    const double ds = upstream * (neighbours[k].lr - fwd.alpha_tilde) / denom;
    const Vec<double> diff = h - neighbours[k].embedding;
    // s_k = exp(-delta |h - n_k|^2)
    g.query += ds * (-2.0 * delta * s) * diff;
    g.embeddings.push_back(ds * (2.0 * delta * s) * diff);
    g.lrs.push_back(upstream * s / denom);
  }
  return g;
}

}  // namespace paml::memory
