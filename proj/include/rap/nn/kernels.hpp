#pragma once

// Forward/backward kernels. Sequences are stored column-per-token: a d x n
// matrix holds n tokens of width d. Backward functions accumulate (+=) into
// parameter gradients and overwrite input gradients.

#include "rap/types.hpp"

#include <cmath>
#include <limits>

namespace rap::nn {

// ---- affine -----------------------------------------------------------------

/// Y = W X + b 1^T
template <typename DX, typename DW, typename DB>
MatrixX<typename DX::Scalar> affine(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DW>& w,
                                    const Eigen::MatrixBase<DB>& b) {
  if (w.cols() != x.rows() || b.size() != w.rows()) {
    throw Error("shape mismatch", "affine: W is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                                      ", x has " + std::to_string(x.rows()) + " rows, b has " +
                                      std::to_string(b.size()));
  }
  MatrixX<typename DX::Scalar> y = w * x;
  y.colwise() += b.derived().reshaped();
  return y;
}

template <typename Scalar>
void affine_backward(const MatrixX<Scalar>& x, const MatrixX<Scalar>& w, const MatrixX<Scalar>& dy,
                     MatrixX<Scalar>& dw, MatrixX<Scalar>& db, MatrixX<Scalar>* dx) {
  dw.noalias() += dy * x.transpose();
  db += dy.rowwise().sum();
  if (dx) dx->noalias() = w.transpose() * dy;
}

// ---- relu -------------------------------------------------------------------

template <typename Derived>
MatrixX<typename Derived::Scalar> relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

/// dx = dy where the pre-activation was positive.
template <typename Scalar>
MatrixX<Scalar> relu_backward(const MatrixX<Scalar>& pre, const MatrixX<Scalar>& dy) {
  return (pre.array() > Scalar(0)).select(dy, Scalar(0));
}

// ---- layer normalization (per column) ---------------------------------------

template <typename Scalar>
struct LayerNormCache {
  MatrixX<Scalar> normalized;  // x-hat
  VectorX<Scalar> inv_std;     // per column
};

template <typename Scalar>
MatrixX<Scalar> layer_norm(const MatrixX<Scalar>& x, const MatrixX<Scalar>& gain, const MatrixX<Scalar>& bias,
                           LayerNormCache<Scalar>& cache, Scalar eps = Scalar(1e-5)) {
  const auto d = static_cast<Scalar>(x.rows());
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> mean = x.colwise().sum().array() / d;
  MatrixX<Scalar> centered = x.rowwise() - mean.matrix();
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> var = centered.array().square().colwise().sum() / d;
  cache.inv_std = (var + eps).rsqrt().transpose().matrix();
  cache.normalized = centered * cache.inv_std.asDiagonal();
  MatrixX<Scalar> y = gain.col(0).asDiagonal() * cache.normalized;
  y.colwise() += bias.col(0);
  return y;
}

template <typename Scalar>
MatrixX<Scalar> layer_norm_backward(const LayerNormCache<Scalar>& cache, const MatrixX<Scalar>& gain,
                                    const MatrixX<Scalar>& dy, MatrixX<Scalar>& dgain, MatrixX<Scalar>& dbias) {
  const auto d = static_cast<Scalar>(dy.rows());
  dgain.col(0) += dy.cwiseProduct(cache.normalized).rowwise().sum();
  dbias.col(0) += dy.rowwise().sum();
  const MatrixX<Scalar> dxhat = gain.col(0).asDiagonal() * dy;
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum_dxhat = dxhat.colwise().sum();
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum_dxhat_xhat = dxhat.cwiseProduct(cache.normalized).colwise().sum();
  MatrixX<Scalar> dx = d * dxhat;
  dx.rowwise() -= sum_dxhat;
  dx -= cache.normalized * sum_dxhat_xhat.asDiagonal();
  return dx * (cache.inv_std / d).asDiagonal();
}

// ---- causal single-head attention -------------------------------------------

/// Returns out (dh x n) with out_i = sum_{j<=i} A(i,j) v_j, where A is the
/// row-softmax of q_i.k_j / sqrt(dh) restricted to j <= i. `weights` receives A.
template <typename Scalar>
MatrixX<Scalar> causal_attention(const MatrixX<Scalar>& q, const MatrixX<Scalar>& k, const MatrixX<Scalar>& v,
                                 MatrixX<Scalar>& weights) {
  const Eigen::Index n = q.cols();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(q.rows()));
  weights = (q.transpose() * k) * scale;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar peak = weights.row(i).head(i + 1).maxCoeff();
    Scalar total = 0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      weights(i, j) = std::exp(weights(i, j) - peak);
      total += weights(i, j);
    }
    weights.row(i).head(i + 1) /= total;
    weights.row(i).tail(n - i - 1).setZero();
  }
  return v * weights.transpose();
}

template <typename Scalar>
void causal_attention_backward(const MatrixX<Scalar>& q, const MatrixX<Scalar>& k, const MatrixX<Scalar>& v,
                               const MatrixX<Scalar>& weights, const MatrixX<Scalar>& dout, MatrixX<Scalar>& dq,
                               MatrixX<Scalar>& dk, MatrixX<Scalar>& dv) {
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(q.rows()));
  dv.noalias() = dout * weights;
  const MatrixX<Scalar> dweights = dout.transpose() * v;
  // Row-wise softmax Jacobian; masked entries have zero weight and stay zero.
  const VectorX<Scalar> row_dot = weights.cwiseProduct(dweights).rowwise().sum();
  MatrixX<Scalar> dscores = weights.cwiseProduct(dweights.colwise() - row_dot);
  dscores *= scale;
  dq.noalias() = k * dscores.transpose();
  dk.noalias() = q * dscores;
}

// ---- losses -----------------------------------------------------------------

template <typename Scalar>
struct LossGrad {
  Scalar loss = 0;
  VectorX<Scalar> grad;  // d loss / d logits
};

/// -log softmax(logits)[target]; gradient softmax(logits) - onehot(target).
/// Logits equal to -inf are excluded from the normalizer.
template <typename Derived>
LossGrad<typename Derived::Scalar> softmax_cross_entropy(const Eigen::MatrixBase<Derived>& logits, Eigen::Index target) {
  using Scalar = typename Derived::Scalar;
  if (target < 0 || target >= logits.size()) throw Error("invalid target", "target index out of range");
  const Scalar peak = logits.maxCoeff();
  VectorX<Scalar> p = (logits.array() - peak).exp().matrix();
  p = (logits.array() == -std::numeric_limits<Scalar>::infinity()).select(Scalar(0), p);
  const Scalar z = p.sum();
  p /= z;
  LossGrad<Scalar> out;
  out.loss = -(logits(target) - peak - std::log(z));
  out.grad = p;
  out.grad(target) -= Scalar(1);
  return out;
}

template <typename Scalar>
struct InfoNceGrad {
  Scalar loss = 0;
  VectorX<Scalar> d_predicted;   // d loss / d l-hat
  MatrixX<Scalar> d_embeddings;  // d loss / d candidate embeddings (d x |V|)
  VectorX<Scalar> probs;
};

/// Contrastive loss of one predicted embedding against a bank of candidate
/// embeddings (columns). The positive is column `target`; every other
/// unmasked column is a negative. `masked` columns (e.g. START) never score.
template <typename Scalar>
InfoNceGrad<Scalar> infonce(const VectorX<Scalar>& predicted, const MatrixX<Scalar>& candidates, Eigen::Index target,
                            Eigen::Index masked = -1, bool want_embedding_grad = false) {
  if (candidates.cols() < 2) throw Error("invalid vocabulary", "contrastive loss needs at least 2 candidates");
  VectorX<Scalar> logits = candidates.transpose() * predicted;
  if (masked >= 0) logits(masked) = -std::numeric_limits<Scalar>::infinity();
  auto ce = softmax_cross_entropy(logits, target);
  InfoNceGrad<Scalar> out;
  out.loss = ce.loss;
  out.probs = ce.grad;
  out.probs(target) += Scalar(1);
  out.d_predicted = candidates * ce.grad;
  if (want_embedding_grad) out.d_embeddings = predicted * ce.grad.transpose();
  return out;
}

}  // namespace rap::nn
