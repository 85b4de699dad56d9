#include "rap/nn/transformer.hpp"

#include <cmath>

namespace rap::nn {

void TransformerConfig::validate() const {
  if (layers < 1) throw Error("invalid config", "transformer needs at least one layer");
  if (heads < 1 || d_model % heads != 0) {
    throw Error("invalid config", "heads (" + std::to_string(heads) + ") must divide d_model (" +
                                      std::to_string(d_model) + ")");
  }
  if (hidden < 1) throw Error("invalid config", "hidden width must be positive");
}

CausalTransformer::CausalTransformer(ParameterStore& store, const std::string& prefix, const TransformerConfig& config,
                                     Rng& rng)
    : config_(config) {
  config_.validate();
  const int d = config.d_model;
  const int h = config.hidden;
  const double residual_scale = 1.0 / std::sqrt(2.0 * config.layers);
  auto weight = [&](int rows, int cols, double extra = 1.0) {
    return gaussian_matrix(rows, cols, rng, extra / std::sqrt(static_cast<double>(cols)));
  };
  auto zeros = [](int rows) { return Matrix::Zero(rows, 1); };
  auto ones = [](int rows) { return Matrix::Ones(rows, 1); };

  for (int l = 0; l < config.layers; ++l) {
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    LayerParams lp;
    lp.ln1_gain = store.add(p + "ln1.gain", ones(d), false);
    lp.ln1_bias = store.add(p + "ln1.bias", zeros(d), false);
    lp.wq = store.add(p + "attn.wq", weight(d, d));
    lp.bq = store.add(p + "attn.bq", zeros(d), false);
    lp.wk = store.add(p + "attn.wk", weight(d, d));
    lp.bk = store.add(p + "attn.bk", zeros(d), false);
    lp.wv = store.add(p + "attn.wv", weight(d, d));
    lp.bv = store.add(p + "attn.bv", zeros(d), false);
    lp.wo = store.add(p + "attn.wo", weight(d, d, residual_scale));
    lp.bo = store.add(p + "attn.bo", zeros(d), false);
    lp.ln2_gain = store.add(p + "ln2.gain", ones(d), false);
    lp.ln2_bias = store.add(p + "ln2.bias", zeros(d), false);
    lp.w1 = store.add(p + "mlp.w1", weight(h, d));
    lp.b1 = store.add(p + "mlp.b1", zeros(h), false);
    lp.w2 = store.add(p + "mlp.w2", weight(d, h, residual_scale));
    lp.b2 = store.add(p + "mlp.b2", zeros(d), false);
    layers_.push_back(lp);
  }
  final_gain_ = store.add(prefix + "final.gain", ones(d), false);
  final_bias_ = store.add(prefix + "final.bias", zeros(d), false);
}

Matrix CausalTransformer::forward(const ParameterStore& store, const Matrix& x, Cache* cache) const {
  if (x.rows() != config_.d_model) throw Error("shape mismatch", "transformer input has wrong width");
  if (x.cols() < 1) throw Error("shape mismatch", "transformer input is empty");
  const int dh = config_.d_model / config_.heads;

  Cache local;
  Cache& c = cache ? *cache : local;
  c.layers.assign(layers_.size(), {});

  Matrix state = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& lp = layers_[l];
    auto& lc = c.layers[l];
    lc.input = state;
    lc.normed1 = layer_norm(state, store.value(lp.ln1_gain), store.value(lp.ln1_bias), lc.ln1);
    lc.q = affine(lc.normed1, store.value(lp.wq), store.value(lp.bq));
    lc.k = affine(lc.normed1, store.value(lp.wk), store.value(lp.bk));
    lc.v = affine(lc.normed1, store.value(lp.wv), store.value(lp.bv));
    lc.heads.resize(config_.d_model, x.cols());
    lc.weights.resize(static_cast<std::size_t>(config_.heads));
    for (int h = 0; h < config_.heads; ++h) {
      const Matrix qh = lc.q.middleRows(h * dh, dh);
      const Matrix kh = lc.k.middleRows(h * dh, dh);
      const Matrix vh = lc.v.middleRows(h * dh, dh);
      lc.heads.middleRows(h * dh, dh) = causal_attention(qh, kh, vh, lc.weights[static_cast<std::size_t>(h)]);
    }
    lc.mid = state + affine(lc.heads, store.value(lp.wo), store.value(lp.bo));
    lc.normed2 = layer_norm(lc.mid, store.value(lp.ln2_gain), store.value(lp.ln2_bias), lc.ln2);
    lc.pre = affine(lc.normed2, store.value(lp.w1), store.value(lp.b1));
    lc.act = relu(lc.pre);
    state = lc.mid + affine(lc.act, store.value(lp.w2), store.value(lp.b2));
  }
  return layer_norm(state, store.value(final_gain_), store.value(final_bias_), c.final_norm);
}

Matrix CausalTransformer::backward(ParameterStore& store, const Cache& cache, const Matrix& dy) const {
  const int dh = config_.d_model / config_.heads;
  Matrix dstate = layer_norm_backward(cache.final_norm, store.value(final_gain_), dy, store.grad(final_gain_),
                                      store.grad(final_bias_));

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& lp = layers_[li];
    const auto& lc = cache.layers[li];

    // MLP branch.
    Matrix dact;
    affine_backward(lc.act, store.value(lp.w2), dstate, store.grad(lp.w2), store.grad(lp.b2), &dact);
    const Matrix dpre = relu_backward(lc.pre, dact);
    Matrix dnormed2;
    affine_backward(lc.normed2, store.value(lp.w1), dpre, store.grad(lp.w1), store.grad(lp.b1), &dnormed2);
    Matrix dmid = dstate + layer_norm_backward(lc.ln2, store.value(lp.ln2_gain), dnormed2, store.grad(lp.ln2_gain),
                                               store.grad(lp.ln2_bias));

    // Attention branch.
    Matrix dheads;
    affine_backward(lc.heads, store.value(lp.wo), dmid, store.grad(lp.wo), store.grad(lp.bo), &dheads);
    Matrix dq(lc.q.rows(), lc.q.cols()), dk(lc.k.rows(), lc.k.cols()), dv(lc.v.rows(), lc.v.cols());
    for (int h = 0; h < config_.heads; ++h) {
      const Matrix qh = lc.q.middleRows(h * dh, dh);
      const Matrix kh = lc.k.middleRows(h * dh, dh);
      const Matrix vh = lc.v.middleRows(h * dh, dh);
      const Matrix douth = dheads.middleRows(h * dh, dh);
      Matrix dqh, dkh, dvh;
      causal_attention_backward(qh, kh, vh, lc.weights[static_cast<std::size_t>(h)], douth, dqh, dkh, dvh);
      dq.middleRows(h * dh, dh) = dqh;
      dk.middleRows(h * dh, dh) = dkh;
      dv.middleRows(h * dh, dh) = dvh;
    }
    Matrix dnormed1, tmp;
    affine_backward(lc.normed1, store.value(lp.wq), dq, store.grad(lp.wq), store.grad(lp.bq), &dnormed1);
    affine_backward(lc.normed1, store.value(lp.wk), dk, store.grad(lp.wk), store.grad(lp.bk), &tmp);
    dnormed1 += tmp;
    affine_backward(lc.normed1, store.value(lp.wv), dv, store.grad(lp.wv), store.grad(lp.bv), &tmp);
    dnormed1 += tmp;
    dstate = dmid + layer_norm_backward(lc.ln1, store.value(lp.ln1_gain), dnormed1, store.grad(lp.ln1_gain),
                                        store.grad(lp.ln1_bias));
  }
  return dstate;
}

}  // namespace rap::nn
