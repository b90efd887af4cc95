#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "paml/core/model.hpp"

namespace paml::meta {

/// alpha'(h) = scale * sigmoid(out(hidden(h))).
///
/// Hidden layers are dense; ReLU follows every hidden layer except, unless
/// `relu_last_hidden` is set, the last one.
struct LrHeadSpec {
  Index input_dim = 0;
  std::vector<Index> dims{64, 32, 1};
  double scale = 1e-3;
  bool relu_last_hidden = false;

  Index num_hidden() const { return static_cast<Index>(dims.size()) - 1; }
  bool relu_after(Index l) const { return l + 1 < num_hidden() || relu_last_hidden; }

  void validate() const {
    if (input_dim <= 0) throw InputError("learning-rate head: input dimension must be positive");
    if (dims.empty() || dims.back() != 1) throw InputError("learning-rate head must end in one unit");
    for (Index d : dims)
      if (d <= 0) throw InputError("learning-rate head: layer widths must be positive");
    if (!(scale > 0) || !std::isfinite(scale)) throw InputError("learning-rate head: scale must be positive");
  }
};

inline LrHeadSpec lr_head_for(const ModelSpec& spec, double scale = 1e-3) {
  LrHeadSpec h;
  h.input_dim = spec.user_embedding_dim();
  h.dims = spec.lr_dims;
  h.scale = scale;
  h.relu_last_hidden = spec.lr_relu_last_hidden;
  return h;
}

inline std::shared_ptr<const Layout> make_psi_layout(const LrHeadSpec& head) {
  head.validate();
  auto layout = std::make_shared<Layout>();
  Index in = head.input_dim;
  for (Index l = 0; l < head.num_hidden(); ++l) {
    const Index out = head.dims[static_cast<std::size_t>(l)];
    layout->add("lr/" + std::to_string(l) + "/W", out, in);
    layout->add("lr/" + std::to_string(l) + "/b", out, 1);
    in = out;
  }
  layout->add("lr/out/W", 1, in);
  layout->add("lr/out/b", 1, 1);
  return layout;
}

inline ParamSet<double> init_psi(const LrHeadSpec& head, std::uint64_t seed) {
  ParamSet<double> psi(make_psi_layout(head));
  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  for (Index b = 0; b < psi.layout()->size(); ++b) {
    const Index weight = b % 2 == 0 ? b : b - 1;
    const double bound = 1.0 / std::sqrt(static_cast<double>(psi.layout()->block(weight).cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto m = psi.block(b);
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
  }
  return psi;
}

template <class Scalar>
struct LrTape {
  std::vector<Vec<Scalar>> pre;
  std::vector<Vec<Scalar>> act;
  Scalar sig{};
  Scalar alpha{};
};

template <class Scalar>
LrTape<Scalar> lr_forward(const ParamSet<Scalar>& psi, const LrHeadSpec& head, const Vec<Scalar>& h) {
  using std::exp;
  if (h.size() != head.input_dim) throw InputError("learning-rate head: embedding has the wrong dimension");
  LrTape<Scalar> t;
  Vec<Scalar> x = h;
  for (Index l = 0; l < head.num_hidden(); ++l) {
    Vec<Scalar> pre = psi.block(2 * l) * x + psi.block(2 * l + 1).col(0);
    Vec<Scalar> act = head.relu_after(l) ? Vec<Scalar>(pre.unaryExpr([](Scalar v) { return detail::relu(v); })) : pre;
    t.pre.push_back(std::move(pre));
    t.act.push_back(act);
    x = std::move(act);
  }
  const Index o = 2 * head.num_hidden();
  const Scalar z = (psi.block(o) * x)(0, 0) + psi.block(o + 1)(0, 0);
  t.sig = Scalar(1) / (Scalar(1) + exp(-z));
  t.alpha = Scalar(head.scale) * t.sig;
  return t;
}

/// Learning rate alpha'(h) in (0, scale).
template <class Scalar>
Scalar lr_alpha(const ParamSet<Scalar>& psi, const LrHeadSpec& head, const Vec<Scalar>& h) {
  return lr_forward(psi, head, h).alpha;
}

/// Backward pass of upstream * alpha'(h): accumulates into `dpsi` (when given)
/// and returns the derivative with respect to h.
template <class Scalar>
Vec<Scalar> lr_backward(const ParamSet<Scalar>& psi, const LrHeadSpec& head, const Vec<Scalar>& h,
                        const LrTape<Scalar>& t, Scalar upstream, ParamSet<Scalar>* dpsi) {
  const Index o = 2 * head.num_hidden();
  const Scalar dz = upstream * Scalar(head.scale) * t.sig * (Scalar(1) - t.sig);
  const Vec<Scalar>& last = head.num_hidden() > 0 ? t.act.back() : h;
  if (dpsi) {
    dpsi->block(o) += dz * last.transpose();
    dpsi->block(o + 1)(0, 0) += dz;
  }
  Vec<Scalar> delta = dz * psi.block(o).row(0).transpose();
  for (Index l = head.num_hidden() - 1; l >= 0; --l) {
    const auto L = static_cast<std::size_t>(l);
    if (head.relu_after(l))
      delta = (t.pre[L].array() > Scalar(0)).select(delta.array(), Scalar(0)).matrix();
    const Vec<Scalar>& in = l > 0 ? t.act[L - 1] : h;
    if (dpsi) {
      dpsi->block(2 * l) += delta * in.transpose();
      dpsi->block(2 * l + 1).col(0) += delta;
    }
    delta = psi.block(2 * l).transpose() * delta;
  }
  return delta;
}

}  // namespace paml::meta
