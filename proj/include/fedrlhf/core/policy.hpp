#pragma once

// Linear-softmax policy over a finite completion vocabulary.
//
// score(x, v) = <W, psi(x, y_v)> + b_v with the bilinear feature map
// psi(x, y) = vec(x y^T), i.e. score = x^T W y_v + b_v. Parameters are laid
// out as [vec(W) (column-major, prompt_dim x completion_dim); b (vocab)].

#include "fedrlhf/core/rng.hpp"
#include "fedrlhf/core/types.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <vector>

namespace fedrlhf {

// vec(x y^T), column-major.
template <typename DX, typename DY>
VectorXd bilinear_features(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y) {
  MatrixXd outer = x.template cast<double>() * y.template cast<double>().transpose();
  return Eigen::Map<const VectorXd>(outer.data(), outer.size());
}

template <typename Scalar = double>
struct PolicyModel {
  int prompt_dim = 0;
  // One row per completion id, completion_dim columns. Shared: the vocabulary
  // is immutable and identical across a policy and its frozen reference.
  std::shared_ptr<const MatrixXd> vocab;
  ParamVectorT<Scalar> params;
  double temperature = 1.0;

  PolicyModel() = default;
  PolicyModel(int prompt_dim_, std::shared_ptr<const MatrixXd> vocab_, ParamVectorT<Scalar> params_,
              double temperature_ = 1.0)
      : prompt_dim(prompt_dim_), vocab(std::move(vocab_)), params(std::move(params_)),
        temperature(temperature_) {
    if (!vocab || vocab->rows() < 1) throw ShapeError("policy: empty vocabulary");
    require_dim(params.size(), param_count(prompt_dim, *vocab), "policy params");
    if (!(temperature >= 0.0)) throw std::invalid_argument("policy: temperature must be >= 0");
  }

  static Eigen::Index param_count(int prompt_dim, const MatrixXd& vocab) {
    return Eigen::Index(prompt_dim) * vocab.cols() + vocab.rows();
  }

  int vocab_size() const { return static_cast<int>(vocab->rows()); }
  int completion_dim() const { return static_cast<int>(vocab->cols()); }

  Eigen::Map<const Matrix<Scalar>> weight() const {
    return {params.data(), prompt_dim, completion_dim()};
  }
  Eigen::Map<const Vector<Scalar>> bias() const {
    return {params.data() + Eigen::Index(prompt_dim) * completion_dim(), vocab_size()};
  }

  template <typename Other>
  PolicyModel<Other> cast() const {
    return PolicyModel<Other>(prompt_dim, vocab, params.template cast<Other>(), temperature);
  }
};

using Policy = PolicyModel<double>;

inline Policy make_policy(int prompt_dim, std::shared_ptr<const MatrixXd> vocab, double temperature = 1.0) {
  const auto n = Policy::param_count(prompt_dim, *vocab);
  return Policy(prompt_dim, std::move(vocab), ParamVector::Zero(n), temperature);
}

template <typename Scalar, typename DX>
Vector<Scalar> policy_scores(const PolicyModel<Scalar>& model, const Eigen::MatrixBase<DX>& x) {
  require_dim(x.size(), model.prompt_dim, "policy x");
  Vector<Scalar> proj = model.weight().transpose() * x.template cast<Scalar>();  // completion_dim
  return model.vocab->template cast<Scalar>() * proj + model.bias();
}

// log pi(. | x) over the vocabulary, at unit temperature.
template <typename Scalar, typename DX>
Vector<Scalar> policy_logprobs(const PolicyModel<Scalar>& model, const Eigen::MatrixBase<DX>& x) {
  using std::exp;
  using std::log;
  Vector<Scalar> s = policy_scores(model, x);
  const Scalar hi = s.maxCoeff();
  const Scalar lse = hi + log((s.array() - hi).exp().sum());
  return s.array() - lse;
}

template <typename Scalar, typename DX>
Scalar policy_logprob(const PolicyModel<Scalar>& model, const Eigen::MatrixBase<DX>& x, int y) {
  if (y < 0 || y >= model.vocab_size()) {
    throw IndexError("policy_logprob: completion id " + std::to_string(y) + " out of range");
  }
  return policy_logprobs(model, x)[y];
}

// Gradient of log pi(y | x) w.r.t. params: psi(x, y) - E_pi[psi] on the weight
// block, e_y - pi on the bias block.
template <typename DX>
ParamVector policy_logprob_grad(const Policy& model, const Eigen::MatrixBase<DX>& x, int y) {
  if (y < 0 || y >= model.vocab_size()) throw IndexError("policy_logprob_grad: completion id out of range");
  const VectorXd probs = policy_logprobs(model, x).array().exp();
  const auto& vocab = *model.vocab;
  const VectorXd y_centered = vocab.row(y).transpose() - vocab.transpose() * probs;
  ParamVector g(model.params.size());
  const Eigen::Index nw = Eigen::Index(model.prompt_dim) * model.completion_dim();
  g.head(nw) = bilinear_features(x, y_centered);
  g.tail(model.vocab_size()) = -probs;
  g[nw + y] += 1.0;
  return g;
}

inline int argmax_lowest(const VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// n i.i.d. draws at the model temperature; temperature 0 is greedy decoding.
template <typename DX>
std::vector<int> policy_sample(const Policy& model, const Eigen::MatrixBase<DX>& x, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("policy_sample: n must be >= 1");
  const VectorXd s = policy_scores(model, x);
  if (model.temperature == 0.0) return std::vector<int>(static_cast<std::size_t>(n), argmax_lowest(s));
  const VectorXd scaled = s / model.temperature;
  const VectorXd w = (scaled.array() - scaled.maxCoeff()).exp();
  std::discrete_distribution<int> dist(w.data(), w.data() + w.size());
  std::vector<int> out(static_cast<std::size_t>(n));
  for (auto& o : out) o = dist(rng);
  return out;
}

template <typename DX>
int policy_greedy(const Policy& model, const Eigen::MatrixBase<DX>& x) {
  return argmax_lowest(policy_scores(model, x));
}

}  // namespace fedrlhf
