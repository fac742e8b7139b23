#pragma once

#include "fedrlhf/core/types.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedrlhf {

enum class OptimizerKind { kSgd, kAdamW, kRmsProp };

// Hyperparameters only; per-run moments live in OptimizerState.
struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::kAdamW;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double rms_decay = 0.99;

  void validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("optimizer: lr must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw std::invalid_argument("optimizer: betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw std::invalid_argument("optimizer: eps must be > 0");
    if (!(rms_decay >= 0.0 && rms_decay < 1.0)) throw std::invalid_argument("optimizer: rms_decay must lie in [0, 1)");
  }
};

struct OptimizerState {
  OptimizerSpec spec;
  VectorXd first_moment;   // AdamW m
  VectorXd second_moment;  // AdamW v, RMSprop square average
  std::int64_t step = 0;

  OptimizerState() = default;
  OptimizerState(OptimizerSpec s, Eigen::Index dim)
      : spec(s), first_moment(VectorXd::Zero(dim)), second_moment(VectorXd::Zero(dim)) {
    spec.validate();
  }
};

// One update in place. SGD: p -= lr * g. AdamW follows the decoupled form
// p *= (1 - lr * wd) followed by the bias-corrected Adam step. RMSprop:
// v = a v + (1 - a) g^2, p -= lr g / (sqrt(v) + eps).
inline void optimizer_step(OptimizerState& state, ParamVector& params, const ParamVector& grad) {
  require_dim(grad.size(), params.size(), "optimizer_step: grad");
  require_dim(state.first_moment.size(), params.size(), "optimizer_step: state");
  const auto& s = state.spec;
  ++state.step;
  switch (s.kind) {
    case OptimizerKind::kSgd:
      params.noalias() -= s.lr * grad;
      break;
    case OptimizerKind::kAdamW: {
      state.first_moment = s.beta1 * state.first_moment + (1.0 - s.beta1) * grad;
      state.second_moment = s.beta2 * state.second_moment + (1.0 - s.beta2) * grad.cwiseAbs2();
      const double t = static_cast<double>(state.step);
      const double c1 = 1.0 - std::pow(s.beta1, t);
      const double c2 = 1.0 - std::pow(s.beta2, t);
      if (s.weight_decay != 0.0) params *= (1.0 - s.lr * s.weight_decay);
      params.array() -= s.lr * (state.first_moment.array() / c1) /
                        ((state.second_moment.array() / c2).sqrt() + s.eps);
      break;
    }
    case OptimizerKind::kRmsProp:
      state.second_moment = s.rms_decay * state.second_moment + (1.0 - s.rms_decay) * grad.cwiseAbs2();
      params.array() -= s.lr * grad.array() / (state.second_moment.array().sqrt() + s.eps);
      break;
  }
  if (!params.allFinite()) throw std::runtime_error("optimizer_step: non-finite parameters after update");
}

inline std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kAdamW: return "adamw";
    case OptimizerKind::kRmsProp: return "rmsprop";
  }
  return "?";
}

inline OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adamw") return OptimizerKind::kAdamW;
  if (name == "rmsprop") return OptimizerKind::kRmsProp;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

}  // namespace fedrlhf
