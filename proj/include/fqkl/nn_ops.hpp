#pragma once

#include <cmath>

#include "fqkl/rng.hpp"
#include "fqkl/tensor.hpp"

namespace fqkl {

enum class Activation { Sigmoid, Tanh, Relu };

inline double sigmoid(double x) {
  // Branch keeps exp() off large positive arguments.
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor activation(const Tensor& x, Activation kind);

/// Retained by conv1d_forward for the backward pass: the layer input and the
/// pre-activation values (before ReLU).
struct Conv1dCache {
  Tensor input;
  Tensor pre;
};

/// Valid (no padding), stride-1 temporal convolution with ReLU.
/// input: T x C_in, weights: C_out x K x C_in, bias: C_out.
/// output[t,k] = ReLU(sum_{i<K} sum_{c<C_in} w[k,i,c] * input[t+i,c] + b[k]).
Tensor conv1d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      Conv1dCache* cache = nullptr);

struct Conv1dGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

/// Gradients of a scalar loss through conv1d_forward. The ReLU gate uses
/// subgradient 0 at exactly 0.
Conv1dGrads conv1d_backward(const Conv1dCache& cache, const Tensor& weights,
                            const Tensor& upstream);

struct SoftmaxXent {
  double loss;
  Tensor grad;  // d loss / d logits = softmax - onehot
};

/// Cross-entropy against a class index, computed with max-subtraction.
SoftmaxXent softmax_cross_entropy(const Tensor& logits, std::size_t label);

/// Inverted dropout. In training mode each element is zeroed with probability
/// p and survivors are scaled by 1/(1-p); in eval mode the input passes
/// through untouched. `mask_out`, when given, receives the applied
/// multipliers (0 or 1/(1-p)) for the backward pass.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training, Tensor* mask_out = nullptr);

}  // namespace fqkl
