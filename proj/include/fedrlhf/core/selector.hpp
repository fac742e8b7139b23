#pragma once

// Binary selector: an MLP over [x; y0; y1] producing two logits. Logit 0 votes
// for y0, logit 1 for y1. Everything is templated on the scalar so the same
// code path can be evaluated in extended precision by gradient checks.

#include "fedrlhf/core/example.hpp"
#include "fedrlhf/core/rng.hpp"
#include "fedrlhf/core/types.hpp"

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fedrlhf {

struct SelectorArch {
  int prompt_dim = 0;
  int completion_dim = 0;
  std::vector<int> hidden;

  int input_dim() const { return prompt_dim + 2 * completion_dim; }

  std::vector<int> layer_sizes() const {
    std::vector<int> sizes{input_dim()};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2);
    return sizes;
  }

  Eigen::Index param_count() const {
    auto sizes = layer_sizes();
    Eigen::Index n = 0;
    for (std::size_t l = 1; l < sizes.size(); ++l) n += sizes[l] * (sizes[l - 1] + 1);
    return n;
  }

  void validate() const {
    if (prompt_dim < 0 || completion_dim < 1) throw ShapeError("selector arch: bad input dims");
    for (int h : hidden) {
      if (h < 1) throw ShapeError("selector arch: hidden widths must be positive");
    }
  }

  friend bool operator==(const SelectorArch&, const SelectorArch&) = default;
};

template <typename Scalar = double>
struct SelectorModel {
  SelectorArch arch;
  ParamVectorT<Scalar> params;

  SelectorModel() = default;
  explicit SelectorModel(SelectorArch a)
      : arch(std::move(a)), params(ParamVectorT<Scalar>::Zero(arch.param_count())) {
    arch.validate();
  }
  SelectorModel(SelectorArch a, ParamVectorT<Scalar> p) : arch(std::move(a)), params(std::move(p)) {
    arch.validate();
    require_dim(params.size(), arch.param_count(), "selector params");
  }

  template <typename Other>
  SelectorModel<Other> cast() const {
    return SelectorModel<Other>(arch, params.template cast<Other>());
  }
};

using Selector = SelectorModel<double>;

// Glorot-normal weights, zero biases.
inline Selector init_selector(const SelectorArch& arch, Rng& rng) {
  Selector model(arch);
  auto sizes = arch.layer_sizes();
  Eigen::Index offset = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    const int fan_in = sizes[l - 1];
    const int fan_out = sizes[l];
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
    for (Eigen::Index i = 0; i < Eigen::Index(fan_in) * fan_out; ++i) {
      model.params[offset + i] = normal(rng);
    }
    offset += Eigen::Index(fan_in) * fan_out + fan_out;
  }
  return model;
}

namespace detail {

template <typename Scalar>
struct LayerView {
  Eigen::Map<const Matrix<Scalar>> weight;
  Eigen::Map<const Vector<Scalar>> bias;
};

template <typename Scalar>
std::vector<LayerView<Scalar>> layers(const SelectorModel<Scalar>& model) {
  auto sizes = model.arch.layer_sizes();
  std::vector<LayerView<Scalar>> out;
  Eigen::Index offset = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    const int in = sizes[l - 1];
    const int o = sizes[l];
    out.push_back({Eigen::Map<const Matrix<Scalar>>(model.params.data() + offset, o, in),
                   Eigen::Map<const Vector<Scalar>>(model.params.data() + offset + Eigen::Index(o) * in, o)});
    offset += Eigen::Index(o) * in + o;
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> stack_inputs(const SelectorArch& arch, std::span<const SymmetrizedExample> batch) {
  Matrix<Scalar> in(arch.input_dim(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& e = batch[b];
    require_dim(e.x.size(), arch.prompt_dim, "example x");
    require_dim(e.y0.size(), arch.completion_dim, "example y0");
    require_dim(e.y1.size(), arch.completion_dim, "example y1");
    auto col = in.col(static_cast<Eigen::Index>(b));
    col.head(arch.prompt_dim) = e.x.cast<Scalar>();
    col.segment(arch.prompt_dim, arch.completion_dim) = e.y0.cast<Scalar>();
    col.tail(arch.completion_dim) = e.y1.cast<Scalar>();
  }
  return in;
}

// Returns the activations of every layer; the last entry holds the logits.
template <typename Scalar>
std::vector<Matrix<Scalar>> forward_all(const SelectorModel<Scalar>& model, Matrix<Scalar> input) {
  auto views = layers(model);
  std::vector<Matrix<Scalar>> acts;
  acts.reserve(views.size() + 1);
  acts.push_back(std::move(input));
  for (std::size_t l = 0; l < views.size(); ++l) {
    Matrix<Scalar> z = views[l].weight * acts.back();
    z.colwise() += views[l].bias;
    if (l + 1 < views.size()) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }
  return acts;
}

template <typename Scalar>
Scalar ce_term(Scalar l0, Scalar l1, int label) {
  using std::exp;
  using std::log;
  using std::max;
  const Scalar hi = max(l0, l1);
  const Scalar lse = hi + log(exp(l0 - hi) + exp(l1 - hi));
  return lse - (label == 0 ? l0 : l1);
}

inline void require_label(int label) {
  if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
}

}  // namespace detail

template <typename Scalar, typename DX, typename DY0, typename DY1>
std::array<Scalar, 2> selector_forward(const SelectorModel<Scalar>& model,
                                       const Eigen::MatrixBase<DX>& x,
                                       const Eigen::MatrixBase<DY0>& y0,
                                       const Eigen::MatrixBase<DY1>& y1) {
  const auto& arch = model.arch;
  require_dim(x.size(), arch.prompt_dim, "selector_forward: x");
  require_dim(y0.size(), arch.completion_dim, "selector_forward: y0");
  require_dim(y1.size(), arch.completion_dim, "selector_forward: y1");
  Matrix<Scalar> in(arch.input_dim(), 1);
  in.col(0) << x.template cast<Scalar>(), y0.template cast<Scalar>(), y1.template cast<Scalar>();
  auto acts = detail::forward_all(model, std::move(in));
  const auto& out = acts.back();
  return {out(0, 0), out(1, 0)};
}

// Mean cross-entropy of softmax(logits) against the labels.
template <typename Scalar>
Scalar selector_ce_loss(const SelectorModel<Scalar>& model, std::span<const SymmetrizedExample> batch) {
  if (batch.empty()) throw EmptyBatchError("selector_ce_loss: empty batch");
  auto acts = detail::forward_all(model, detail::stack_inputs<Scalar>(model.arch, batch));
  const auto& logits = acts.back();
  Scalar total(0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    detail::require_label(batch[b].label);
    const auto c = static_cast<Eigen::Index>(b);
    total += detail::ce_term<Scalar>(logits(0, c), logits(1, c), batch[b].label);
  }
  return total / static_cast<Scalar>(batch.size());
}

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Loss and its gradient w.r.t. params by reverse-mode through the MLP.
inline LossAndGrad selector_loss_and_grad(const Selector& model,
                                          std::span<const SymmetrizedExample> batch) {
  if (batch.empty()) throw EmptyBatchError("selector_grad: empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  auto acts = detail::forward_all(model, detail::stack_inputs<double>(model.arch, batch));
  auto views = detail::layers(model);

  MatrixXd delta = acts.back();  // becomes dL/dlogits
  double loss = 0.0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const int label = batch[static_cast<std::size_t>(b)].label;
    detail::require_label(label);
    const double l0 = delta(0, b), l1 = delta(1, b);
    loss += detail::ce_term(l0, l1, label);
    const double hi = std::max(l0, l1);
    const double e0 = std::exp(l0 - hi), e1 = std::exp(l1 - hi);
    delta(0, b) = e0 / (e0 + e1) - (label == 0 ? 1.0 : 0.0);
    delta(1, b) = e1 / (e0 + e1) - (label == 1 ? 1.0 : 0.0);
  }
  delta /= static_cast<double>(n);

  LossAndGrad out{loss / static_cast<double>(n), ParamVector::Zero(model.params.size())};
  // offsets of each layer inside the flat vector
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& v : views) {
    offsets.push_back(off);
    off += v.weight.size() + v.bias.size();
  }
  for (std::size_t l = views.size(); l-- > 0;) {
    const auto& v = views[l];
    const auto rows = v.weight.rows(), cols = v.weight.cols();
    Eigen::Map<MatrixXd>(out.grad.data() + offsets[l], rows, cols).noalias() =
        delta * acts[l].transpose();
    Eigen::Map<VectorXd>(out.grad.data() + offsets[l] + rows * cols, rows) = delta.rowwise().sum();
    if (l > 0) {
      MatrixXd back = v.weight.transpose() * delta;
      // acts[l] = tanh(z); d tanh = 1 - tanh^2
      delta = back.array() * (1.0 - acts[l].array().square());
    }
  }
  return out;
}

inline ParamVector selector_grad(const Selector& model, std::span<const SymmetrizedExample> batch) {
  return selector_loss_and_grad(model, batch).grad;
}

}  // namespace fedrlhf
