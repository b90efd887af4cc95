#pragma once

#include <optional>

#include "paml/core/loss.hpp"
#include "paml/core/model.hpp"

namespace paml {

/// Gradient of the batch loss, with the loss value it was taken at.
template <class Scalar>
struct Gradient {
  ParamSet<Scalar> params;
  Scalar loss{};
};

namespace detail {

// Tangent of a forward pass along direction v (Pearlmutter's R-operator).
template <class Scalar>
struct TangentTape {
  Mat<Scalar> input;
  std::vector<Mat<Scalar>> act;
  Mat<Scalar> logits;
};

template <class Scalar>
TangentTape<Scalar> forward_tangent(const ParamSet<Scalar>& theta, const ParamSet<Scalar>& v, const ModelSpec& spec,
                                    const Batch& batch, const Tape<Scalar>& tape) {
  TangentTape<Scalar> r;
  const Index n = batch.size();
  const Index d = spec.embedding_dim;
  const Vec<Scalar> ruser = user_embedding(v, spec, batch.user);
  r.input.resize(spec.decision_input_dim(), n);
  for (Index j = 0; j < n; ++j) {
    const FeatureRow& item = batch.items[static_cast<std::size_t>(j)];
    for (Index f = 0; f < spec.num_item_slots(); ++f)
      embed_bag<Scalar>(v.block(spec.item_table(f)), item[static_cast<std::size_t>(f)],
                        spec.item_vocab[static_cast<std::size_t>(f)], r.input.col(j).segment(f * d, d));
    if (spec.user_in_decision) r.input.col(j).segment(spec.item_embedding_dim(), spec.user_embedding_dim()) = ruser;
  }
  const Mat<Scalar>* prev = &tape.input;
  const Mat<Scalar>* rprev = &r.input;
  r.act.resize(tape.act.size());
  for (Index l = 0; l < spec.num_hidden(); ++l) {
    const auto L = static_cast<std::size_t>(l);
    Mat<Scalar> rpre = v.block(spec.hidden_weight(l)) * (*prev) + theta.block(spec.hidden_weight(l)) * (*rprev);
    rpre.colwise() += v.block(spec.hidden_bias(l)).col(0);
    r.act[L] = (tape.pre[L].array() > Scalar(0)).select(rpre.array(), Scalar(0)).matrix();
    prev = &tape.act[L];
    rprev = &r.act[L];
  }
  r.logits = v.block(spec.output_weight()) * (*prev) + theta.block(spec.output_weight()) * (*rprev);
  r.logits.colwise() += v.block(spec.output_bias()).col(0);
  return r;
}

// Reverse pass from dL/dlogits into parameter gradients. When `v`, `rtape`
// and `rdlogits` are given, also propagates their tangents into `rgrad`.
template <class Scalar>
void backprop(const ParamSet<Scalar>& theta, const ModelSpec& spec, const Batch& batch, const Tape<Scalar>& tape,
              const Mat<Scalar>& dlogits, ParamSet<Scalar>& grad, const ParamSet<Scalar>* v = nullptr,
              const TangentTape<Scalar>* rtape = nullptr, const Mat<Scalar>* rdlogits = nullptr,
              ParamSet<Scalar>* rgrad = nullptr) {
  const bool tangent = rgrad != nullptr;
  const Index nh = spec.num_hidden();
  auto act_of = [&](Index l) -> const Mat<Scalar>& {
    return l < 0 ? tape.input : tape.act[static_cast<std::size_t>(l)];
  };
  auto ract_of = [&](Index l) -> const Mat<Scalar>& {
    return l < 0 ? rtape->input : rtape->act[static_cast<std::size_t>(l)];
  };

  Mat<Scalar> delta = dlogits;
  Mat<Scalar> rdelta;
  if (tangent) rdelta = *rdlogits;

  // output layer
  {
    const Mat<Scalar>& a = act_of(nh - 1);
    grad.block(spec.output_weight()).noalias() += delta * a.transpose();
    grad.block(spec.output_bias()).col(0) += delta.rowwise().sum();
    if (tangent) {
      rgrad->block(spec.output_weight()).noalias() += rdelta * a.transpose() + delta * ract_of(nh - 1).transpose();
      rgrad->block(spec.output_bias()).col(0) += rdelta.rowwise().sum();
    }
    Mat<Scalar> dact = theta.block(spec.output_weight()).transpose() * delta;
    if (tangent) rdelta = v->block(spec.output_weight()).transpose() * delta +
                          theta.block(spec.output_weight()).transpose() * rdelta;
    delta = std::move(dact);
  }
  for (Index l = nh - 1; l >= 0; --l) {
    const auto L = static_cast<std::size_t>(l);
    const auto mask = (tape.pre[L].array() > Scalar(0));
    delta = mask.select(delta.array(), Scalar(0)).matrix();
    if (tangent) rdelta = mask.select(rdelta.array(), Scalar(0)).matrix();
    const Mat<Scalar>& a = act_of(l - 1);
    grad.block(spec.hidden_weight(l)).noalias() += delta * a.transpose();
    grad.block(spec.hidden_bias(l)).col(0) += delta.rowwise().sum();
    if (tangent) {
      rgrad->block(spec.hidden_weight(l)).noalias() += rdelta * a.transpose() + delta * ract_of(l - 1).transpose();
      rgrad->block(spec.hidden_bias(l)).col(0) += rdelta.rowwise().sum();
    }
    Mat<Scalar> dact = theta.block(spec.hidden_weight(l)).transpose() * delta;
    if (tangent) rdelta = v->block(spec.hidden_weight(l)).transpose() * delta +
                          theta.block(spec.hidden_weight(l)).transpose() * rdelta;
    delta = std::move(dact);
  }

  // delta is now dL/dinput; scatter into the embedding tables
  const Index d = spec.embedding_dim;
  const Index n = batch.size();
  for (Index j = 0; j < n; ++j) {
    const FeatureRow& item = batch.items[static_cast<std::size_t>(j)];
    for (Index f = 0; f < spec.num_item_slots(); ++f) {
      scatter_bag<Scalar>(grad.block(spec.item_table(f)), item[static_cast<std::size_t>(f)],
                          delta.col(j).segment(f * d, d));
      if (tangent)
        scatter_bag<Scalar>(rgrad->block(spec.item_table(f)), item[static_cast<std::size_t>(f)],
                            rdelta.col(j).segment(f * d, d));
    }
  }
  if (spec.user_in_decision) {
    const auto rows = delta.middleRows(spec.item_embedding_dim(), spec.user_embedding_dim());
    accumulate_user_embedding_grad<Scalar>(spec, batch.user, rows.rowwise().sum(), grad);
    if (tangent) {
      const auto rrows = rdelta.middleRows(spec.item_embedding_dim(), spec.user_embedding_dim());
      accumulate_user_embedding_grad<Scalar>(spec, batch.user, rrows.rowwise().sum(), *rgrad);
    }
  }
}

}  // namespace detail

/// Loss of the model on one batch.
template <class Scalar>
Scalar batch_loss(const ParamSet<Scalar>& theta, const ModelSpec& spec, const Batch& batch) {
  const Tape<Scalar> tape = forward_tape(theta, spec, batch);
  Mat<Scalar> dlogits;
  return detail::head_loss_grad(tape.logits, batch, spec, dlogits);
}

/// Exact reverse-mode gradient of loss(forward(theta)) on one batch.
template <class Scalar>
Gradient<Scalar> grad(const ParamSet<Scalar>& theta, const ModelSpec& spec, const Batch& batch) {
  if (batch.size() == 0) throw InputError("grad: empty batch");
  const Tape<Scalar> tape = forward_tape(theta, spec, batch, /*check=*/true);
  Mat<Scalar> dlogits;
  Gradient<Scalar> g{ParamSet<Scalar>::zeros_like(theta), Scalar(0)};
  g.loss = detail::head_loss_grad(tape.logits, batch, spec, dlogits);
  detail::backprop(theta, spec, batch, tape, dlogits, g.params);
  if (!g.params.all_finite()) throw NumericError("non-finite gradient");
  return g;
}

/// Gradient together with the Hessian-vector product H v, sharing one forward pass.
template <class Scalar>
struct GradHvp {
  Gradient<Scalar> gradient;
  ParamSet<Scalar> hv;
};

template <class Scalar>
GradHvp<Scalar> grad_hvp(const ParamSet<Scalar>& theta, const ModelSpec& spec, const Batch& batch,
                         const ParamSet<Scalar>& v) {
  theta.require_compatible(v, "hvp");
  if (batch.size() == 0) throw InputError("hvp: empty batch");
  const Tape<Scalar> tape = forward_tape(theta, spec, batch, /*check=*/true);
  const detail::TangentTape<Scalar> rtape = detail::forward_tangent(theta, v, spec, batch, tape);
  Mat<Scalar> dlogits;
  GradHvp<Scalar> out{{ParamSet<Scalar>::zeros_like(theta), Scalar(0)}, ParamSet<Scalar>::zeros_like(theta)};
  out.gradient.loss = detail::head_loss_grad(tape.logits, batch, spec, dlogits);
  const Mat<Scalar> rdlogits = detail::head_grad_tangent(tape.logits, rtape.logits, batch, spec);
  detail::backprop(theta, spec, batch, tape, dlogits, out.gradient.params, &v, &rtape, &rdlogits, &out.hv);
  if (!out.hv.all_finite()) throw NumericError("non-finite Hessian-vector product");
  return out;
}

/// Hessian of the batch loss at theta applied to v, computed forward-over-reverse.
template <class Scalar>
ParamSet<Scalar> hvp(const ParamSet<Scalar>& theta, const ModelSpec& spec, const Batch& batch,
                     const ParamSet<Scalar>& v) {
  return grad_hvp(theta, spec, batch, v).hv;
}

}  // namespace paml
