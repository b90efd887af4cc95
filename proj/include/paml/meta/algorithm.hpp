#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "paml/error.hpp"
#include "paml/memory/tree_memory.hpp"

namespace paml::meta {

enum class Algorithm { Paml, AtPaml, RegPaml, MamlFixed, MetaSgd, Transfer };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Paml: return "paml";
    case Algorithm::AtPaml: return "at-paml";
    case Algorithm::RegPaml: return "reg-paml";
    case Algorithm::MamlFixed: return "maml-fixed";
    case Algorithm::MetaSgd: return "meta-sgd";
    case Algorithm::Transfer: return "transfer";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  for (Algorithm a : {Algorithm::Paml, Algorithm::AtPaml, Algorithm::RegPaml, Algorithm::MamlFixed,
                      Algorithm::MetaSgd, Algorithm::Transfer})
    if (s == to_string(a)) return a;
  throw InputError("unknown algorithm '" + std::string(s) + "'");
}

/// Algorithms whose inner rate comes from the learning-rate head.
inline bool uses_lr_head(Algorithm a) {
  return a == Algorithm::Paml || a == Algorithm::AtPaml || a == Algorithm::RegPaml;
}

enum class Optimizer { Adam, Sgd };

// Exact: backpropagate the outer objective into psi.
// Literal: psi += beta * (dL/dpsi) (.) sum_i (dalpha_i/dpsi * L_i(theta)), elementwise.
enum class PsiRule { Exact, Literal };

struct TrainerConfig {
  Algorithm algorithm = Algorithm::Paml;
  std::optional<double> outer_lr;  // unset: 5e-6 for paml, 5e-5 otherwise
  double fixed_inner_lr = 1e-5;
  std::optional<double> finetune_lr;  // transfer test-time step; unset: fixed_inner_lr
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double gamma = 1e-3;
  std::size_t warmup_epochs = 1;
  double warmup_lr = 5e-4;
  double clip_norm = 10.0;  // 0 disables clipping
  Optimizer optimizer = Optimizer::Adam;
  bool freeze_psi = false;
  double lr_scale = 1e-3;
  PsiRule psi_rule = PsiRule::Exact;
  memory::TreeConfig tree{};
  std::uint64_t seed = 0;

  double beta() const {
    if (outer_lr) return *outer_lr;
    return algorithm == Algorithm::Paml ? 5e-6 : 5e-5;
  }
  double finetune_rate() const { return finetune_lr.value_or(fixed_inner_lr); }

  void validate() const {
    auto positive = [](double v, const char* what) {
      if (!(v > 0) || !std::isfinite(v)) throw InputError(std::string(what) + " must be positive");
    };
    if (!(beta() >= 0) || !std::isfinite(beta())) throw InputError("outer_lr must be non-negative");
    positive(fixed_inner_lr, "fixed_inner_lr");
    positive(finetune_rate(), "finetune_lr");
    positive(warmup_lr, "warmup_lr");
    positive(lr_scale, "lr_scale");
    if (batch_size == 0) throw InputError("batch_size must be positive");
    if (gamma < 0 || !std::isfinite(gamma)) throw InputError("gamma must be non-negative");
    if (clip_norm < 0 || !std::isfinite(clip_norm)) throw InputError("clip_norm must be non-negative");
    if (algorithm == Algorithm::AtPaml) {
      if (tree.capacity == 0 || tree.k_train == 0 || tree.k_infer == 0)
        throw InputError("tree capacity and neighbour counts must be positive");
      positive(tree.delta, "tree delta");
      positive(tree.sigma, "tree sigma");
    }
  }
};

}  // namespace paml::meta
