#pragma once

#include "rap/nn/kernels.hpp"
#include "rap/nn/parameters.hpp"

#include <string>
#include <vector>

namespace rap::nn {

struct TransformerConfig {
  int layers = 2;
  int heads = 2;
  int d_model = 32;
  int hidden = 128;  // MLP width

  void validate() const;
};

/// Decoder-only stack of pre-norm blocks
///   h = x + Attn(LN1(x)),  y = h + W2 relu(W1 LN2(h) + b1) + b2
/// followed by a final layer norm. Attention is causal: output column t
/// depends only on input columns <= t.
class CausalTransformer {
 public:
  struct LayerCache {
    Matrix input;
    LayerNormCache<double> ln1;
    Matrix normed1, q, k, v;
    std::vector<Matrix> weights;  // per head, n x n
    Matrix heads;                 // concatenated head outputs, d x n
    Matrix mid;
    LayerNormCache<double> ln2;
    Matrix normed2, pre, act;
  };
  struct Cache {
    std::vector<LayerCache> layers;
    LayerNormCache<double> final_norm;
  };

  CausalTransformer() = default;
  CausalTransformer(ParameterStore& store, const std::string& prefix, const TransformerConfig& config, Rng& rng);

  const TransformerConfig& config() const { return config_; }

  Matrix forward(const ParameterStore& store, const Matrix& x, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients into `store`; returns d loss / d x.
  Matrix backward(ParameterStore& store, const Cache& cache, const Matrix& dy) const;

 private:
  struct LayerParams {
    ParamId ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_bias, w1, b1, w2, b2;
  };

  TransformerConfig config_;
  std::vector<LayerParams> layers_;
  ParamId final_gain_, final_bias_;
};

}  // namespace rap::nn
