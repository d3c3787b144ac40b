#include "fqkl/nn_ops.hpp"

#include <string>

#include "fqkl/errors.hpp"

namespace fqkl {

Tensor activation(const Tensor& x, Activation kind) {
  Tensor out(x.shape());
  const double* in = x.data();
  double* o = out.data();
  switch (kind) {
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) o[i] = sigmoid(in[i]);
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < x.size(); ++i) o[i] = std::tanh(in[i]);
      break;
    case Activation::Relu:
      for (std::size_t i = 0; i < x.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
  }
  return out;
}

Tensor conv1d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      Conv1dCache* cache) {
  if (input.rank() != 2 || weights.rank() != 3 || bias.rank() != 1) {
    throw ShapeError("conv1d: expected input T x C_in, weights C_out x K x C_in, bias C_out");
  }
  const std::size_t t_in = input.extent(0);
  const std::size_t c_in = input.extent(1);
  const std::size_t c_out = weights.extent(0);
  const std::size_t k = weights.extent(1);
  if (weights.extent(2) != c_in) {
    throw ShapeError("conv1d: weight channel count " + std::to_string(weights.extent(2)) +
                     " does not match input channels " + std::to_string(c_in));
  }
  if (bias.extent(0) != c_out) throw ShapeError("conv1d: bias size does not match filter count");
  if (k < 1) throw ShapeError("conv1d: filter width must be >= 1");
  if (t_in < k) {
    throw ShapeError("conv1d: window of length " + std::to_string(t_in) +
                     " is too short for filter width " + std::to_string(k));
  }

  const std::size_t t_out = t_in - k + 1;
  Tensor pre({t_out, c_out});
  for (std::size_t t = 0; t < t_out; ++t) {
    for (std::size_t f = 0; f < c_out; ++f) {
      double acc = bias[f];
      const double* w = weights.data() + f * k * c_in;
      const double* x = input.data() + t * c_in;
      for (std::size_t i = 0; i < k * c_in; ++i) acc += w[i] * x[i];
      pre.at(t, f) = acc;
    }
  }
  Tensor out = activation(pre, Activation::Relu);
  if (cache) {
    cache->input = input;
    cache->pre = std::move(pre);
  }
  return out;
}

Conv1dGrads conv1d_backward(const Conv1dCache& cache, const Tensor& weights,
                            const Tensor& upstream) {
  const Tensor& input = cache.input;
  const Tensor& pre = cache.pre;
  if (!upstream.same_shape(pre)) throw ShapeError("conv1d_backward: upstream shape mismatch");
  const std::size_t c_in = input.extent(1);
  const std::size_t c_out = weights.extent(0);
  const std::size_t k = weights.extent(1);
  const std::size_t t_out = pre.extent(0);

  Conv1dGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({c_out})};
  for (std::size_t t = 0; t < t_out; ++t) {
    for (std::size_t f = 0; f < c_out; ++f) {
      if (pre.at(t, f) <= 0.0) continue;  // ReLU gate, subgradient 0 at 0
      const double d = upstream.at(t, f);
      g.bias[f] += d;
      const double* w = weights.data() + f * k * c_in;
      double* gw = g.weights.data() + f * k * c_in;
      const double* x = input.data() + t * c_in;
      double* gx = g.input.data() + t * c_in;
      for (std::size_t i = 0; i < k * c_in; ++i) {
        gw[i] += d * x[i];
        gx[i] += d * w[i];
      }
    }
  }
  return g;
}

SoftmaxXent softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  const std::size_t c = logits.size();
  if (label >= c) {
    throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) +
                     " out of range for " + std::to_string(c) + " classes");
  }
  double mx = logits[0];
  for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  Tensor grad(logits.shape());
  for (std::size_t i = 0; i < c; ++i) {
    grad[i] = std::exp(logits[i] - mx);
    sum += grad[i];
  }
  for (std::size_t i = 0; i < c; ++i) grad[i] /= sum;
  double loss = -(logits[label] - mx - std::log(sum));
  grad[label] -= 1.0;
  return {loss, std::move(grad)};
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training, Tensor* mask_out) {
  if (p < 0.0 || p >= 1.0) {
    throw ShapeError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) {
    if (mask_out) {
      *mask_out = Tensor(x.shape());
      mask_out->fill(1.0);
    }
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor out(x.shape());
  Tensor mask(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = rng.uniform() < p ? 0.0 : keep_scale;
    mask[i] = m;
    out[i] = x[i] * m;
  }
  if (mask_out) *mask_out = std::move(mask);
  return out;
}

}  // namespace fqkl
