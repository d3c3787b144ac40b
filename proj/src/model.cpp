#include "fqkl/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fqkl/errors.hpp"
#include "fqkl/nn_ops.hpp"

namespace fqkl {

namespace {

std::string conv_name(std::size_t layer, const char* leaf) {
  return "conv." + std::to_string(layer) + "." + leaf;
}

std::string rnn_name(std::size_t layer, const std::string& leaf) {
  return "rnn." + std::to_string(layer) + "." + leaf;
}

// Landmark-side half-angle tables: cos/sin of w_k Z_jk / 2 per gate, N x D
// row-major. They depend only on the parameters, so one build serves a whole
// forward/backward pass.
struct GateTables {
  std::array<std::vector<double>, 4> cz, sz;
};

GateTables build_gate_tables(const QkLayerView& layer) {
  GateTables t;
  const std::size_t n_land = layer.landmarks->extent(0);
  const std::size_t dim = layer.kcfg.feature_dim;
  for (std::size_t g = 0; g < 4; ++g) {
    t.cz[g].resize(n_land * dim);
    t.sz[g].resize(n_land * dim);
    const double* w = layer.scale[g]->data();
    for (std::size_t j = 0; j < n_land; ++j) {
      const double* z = layer.landmarks->data() + j * dim;
      for (std::size_t k = 0; k < dim; ++k) {
        const double zeta = 0.5 * w[k] * z[k];
        t.cz[g][j * dim + k] = std::cos(zeta);
        t.sz[g][j * dim + k] = std::sin(zeta);
      }
    }
  }
  return t;
}

void check_cell_dims(std::size_t x_size, const CellState& prev, std::size_t input_dim,
                     std::size_t hidden) {
  if (x_size != input_dim || prev.h.size() != hidden || prev.c.size() != hidden) {
    throw ShapeError("cell forward: dimension mismatch (x " + std::to_string(x_size) +
                     " vs input_dim " + std::to_string(input_dim) + ", h " +
                     std::to_string(prev.h.size()) + " vs hidden " + std::to_string(hidden) + ")");
  }
}

// Shared LSTM memory update from the four pre-activations.
CellState combine_gates(const std::array<std::vector<double>, 4>& pre, const CellState& prev,
                        std::array<std::vector<double>, 4>* act_out, std::vector<double>* tanh_c_out) {
  const std::size_t n = prev.h.size();
  std::array<std::vector<double>, 4> act;
  for (std::size_t g = 0; g < 4; ++g) act[g].resize(n);
  for (std::size_t h = 0; h < n; ++h) {
    act[kForget][h] = sigmoid(pre[kForget][h]);
    act[kInput][h] = sigmoid(pre[kInput][h]);
    act[kCandidate][h] = std::tanh(pre[kCandidate][h]);
    act[kOutput][h] = sigmoid(pre[kOutput][h]);
  }
  CellState next;
  next.c.resize(n);
  next.h.resize(n);
  std::vector<double> tanh_c(n);
  for (std::size_t h = 0; h < n; ++h) {
    next.c[h] = act[kForget][h] * prev.c[h] + act[kInput][h] * act[kCandidate][h];
    tanh_c[h] = std::tanh(next.c[h]);
    next.h[h] = act[kOutput][h] * tanh_c[h];
  }
  if (act_out) *act_out = std::move(act);
  if (tanh_c_out) *tanh_c_out = std::move(tanh_c);
  return next;
}

// Kernel-gate cell forward against prebuilt landmark tables (depth-0 path)
// or the generic simulator (depth >= 1).
CellState qk_cell_forward_impl(std::span<const double> x_feat, const CellState& prev,
                               const QkLayerView& layer, const GateTables* tables,
                               QkCellCache* cache) {
  check_cell_dims(x_feat.size(), prev, layer.input_dim, layer.hidden);
  const std::size_t n = layer.hidden;
  const std::size_t dim = layer.kcfg.feature_dim;
  const std::size_t n_land = layer.landmarks->extent(0);

  std::vector<double> v(dim);
  for (std::size_t h = 0; h < n; ++h) v[h] = prev.h[h];
  for (std::size_t k = 0; k < x_feat.size(); ++k) v[n + k] = x_feat[k];

  std::array<std::vector<double>, 4> kappa;
  std::array<std::vector<double>, 4> half_cos, half_sin;
  std::array<std::vector<double>, 4> pre;
  for (std::size_t g = 0; g < 4; ++g) {
    kappa[g].resize(n_land);
    pre[g].assign(n, 0.0);
    if (layer.kcfg.depth == 0) {
      // cos(w(v - z)/2) expanded over the half angles of v and z; the
      // landmark side comes from the table.
      half_cos[g].resize(dim);
      half_sin[g].resize(dim);
      const double* w = layer.scale[g]->data();
      for (std::size_t k = 0; k < dim; ++k) {
        const double alpha = 0.5 * w[k] * v[k];
        half_cos[g][k] = std::cos(alpha);
        half_sin[g][k] = std::sin(alpha);
      }
      for (std::size_t j = 0; j < n_land; ++j) {
        const double* cz = tables->cz[g].data() + j * dim;
        const double* sz = tables->sz[g].data() + j * dim;
        double prod = 1.0;
        for (std::size_t k = 0; k < dim; ++k) {
          const double cu = half_cos[g][k] * cz[k] + half_sin[g][k] * sz[k];
          prod *= cu * cu;
        }
        kappa[g][j] = prod;
      }
    } else {
      for (std::size_t j = 0; j < n_land; ++j) {
        kappa[g][j] = kernel_value(v, layer.landmarks->row(j), layer.scale[g]->values(), layer.kcfg);
      }
    }
    for (std::size_t j = 0; j < n_land; ++j) {
      const double kj = kappa[g][j];
      const double* bj = layer.beta[g]->data() + j * n;
      for (std::size_t h = 0; h < n; ++h) pre[g][h] += kj * bj[h];
    }
    if (layer.bias[g]) {
      const double* b = layer.bias[g]->data();
      for (std::size_t h = 0; h < n; ++h) pre[g][h] += b[h];
    }
  }

  std::array<std::vector<double>, 4> act;
  std::vector<double> tanh_c;
  CellState next = combine_gates(pre, prev, &act, &tanh_c);
  if (cache) {
    cache->v = std::move(v);
    cache->kappa = std::move(kappa);
    cache->half_cos = std::move(half_cos);
    cache->half_sin = std::move(half_sin);
    cache->act = std::move(act);
    cache->c_prev = prev.c;
    cache->c = next.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

}  // namespace

void ModelConfig::validate() const {
  if (in_channels < 1 || window < 1) throw ShapeError("model config: window and channels must be >= 1");
  if (conv.empty() || conv.size() > 8) throw ShapeError("model config: conv stack must have 1..8 layers");
  if (rnn_layers < 1 || rnn_layers > 8) throw ShapeError("model config: rnn_layers must be 1..8");
  if (hidden < 1 || landmarks < 1) throw ShapeError("model config: hidden and landmarks must be >= 1");
  if (classes < 2) throw ShapeError("model config: need at least 2 classes");
  if (dropout < 0.0 || dropout >= 1.0) throw ShapeError("model config: dropout must lie in [0, 1)");
  std::size_t t = window;
  for (const auto& l : conv) {
    if (l.width < 1 || l.filters < 1) throw ShapeError("model config: conv width/filters must be >= 1");
    if (t < l.width) {
      throw ShapeError("model config: window of length " + std::to_string(window) +
                       " is too short for the conv stack (shrinks below 1 step)");
    }
    t = t - l.width + 1;
  }
  KernelConfig k{hidden + conv_out_channels(), kernel_block, kernel_depth};
  k.validate();
}

std::size_t ModelConfig::conv_out_len() const {
  std::size_t t = window;
  for (const auto& l : conv) t = t - l.width + 1;
  return t;
}

std::size_t ModelConfig::conv_out_channels() const { return conv.back().filters; }

std::size_t ModelConfig::rnn_input_dim(std::size_t layer) const {
  return layer == 0 ? conv_out_channels() : hidden;
}

KernelConfig ModelConfig::kernel_config(std::size_t layer) const {
  return KernelConfig{hidden + rnn_input_dim(layer), kernel_block, kernel_depth};
}

QkLayerView qk_layer_view(const ModelConfig& cfg, const ParamTree& params, std::size_t layer) {
  QkLayerView v;
  v.input_dim = cfg.rnn_input_dim(layer);
  v.hidden = cfg.hidden;
  v.kcfg = cfg.kernel_config(layer);
  v.landmarks = &params.at(rnn_name(layer, "landmarks"));
  for (std::size_t g = 0; g < 4; ++g) {
    v.beta[g] = &params.at(rnn_name(layer, std::string("beta_") + kGateSuffix[g]));
    v.scale[g] = &params.at(rnn_name(layer, std::string("scale_") + kGateSuffix[g]));
    v.bias[g] = cfg.gate_bias ? &params.at(rnn_name(layer, std::string("gate_bias_") + kGateSuffix[g]))
                              : nullptr;
  }
  return v;
}

LstmLayerView lstm_layer_view(const ModelConfig& cfg, const ParamTree& params, std::size_t layer) {
  LstmLayerView v;
  v.input_dim = cfg.rnn_input_dim(layer);
  v.hidden = cfg.hidden;
  for (std::size_t g = 0; g < 4; ++g) {
    v.weight[g] = &params.at(rnn_name(layer, std::string("weight_") + kGateSuffix[g]));
    v.bias[g] = &params.at(rnn_name(layer, std::string("bias_") + kGateSuffix[g]));
  }
  return v;
}

CellState qklstm_cell_forward(std::span<const double> x_feat, const CellState& prev,
                              const QkLayerView& layer, QkCellCache* cache) {
  if (layer.kcfg.depth == 0) {
    GateTables tables = build_gate_tables(layer);
    return qk_cell_forward_impl(x_feat, prev, layer, &tables, cache);
  }
  return qk_cell_forward_impl(x_feat, prev, layer, nullptr, cache);
}

CellState classical_lstm_cell_forward(std::span<const double> x_feat, const CellState& prev,
                                      const LstmLayerView& layer, LstmCellCache* cache) {
  check_cell_dims(x_feat.size(), prev, layer.input_dim, layer.hidden);
  const std::size_t n = layer.hidden;
  const std::size_t dim = n + layer.input_dim;

  std::vector<double> v(dim);
  for (std::size_t h = 0; h < n; ++h) v[h] = prev.h[h];
  for (std::size_t k = 0; k < x_feat.size(); ++k) v[n + k] = x_feat[k];

  std::array<std::vector<double>, 4> pre;
  for (std::size_t g = 0; g < 4; ++g) {
    pre[g].assign(n, 0.0);
    const double* b = layer.bias[g]->data();
    for (std::size_t h = 0; h < n; ++h) {
      const double* row = layer.weight[g]->data() + h * dim;
      double acc = b[h];
      for (std::size_t k = 0; k < dim; ++k) acc += row[k] * v[k];
      pre[g][h] = acc;
    }
  }

  std::array<std::vector<double>, 4> act;
  std::vector<double> tanh_c;
  CellState next = combine_gates(pre, prev, &act, &tanh_c);
  if (cache) {
    cache->v = std::move(v);
    cache->act = std::move(act);
    cache->c_prev = prev.c;
    cache->c = next.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

Tensor qklstm_layer_forward(const Tensor& seq, const CellState& init, const QkLayerView& layer,
                            std::vector<QkCellCache>* caches, CellState* final_state) {
  if (seq.rank() != 2 || seq.extent(0) == 0) throw ShapeError("layer forward: empty sequence");
  const std::size_t steps = seq.extent(0);
  GateTables tables;
  if (layer.kcfg.depth == 0) tables = build_gate_tables(layer);
  if (caches) caches->resize(steps);

  Tensor hidden({steps, layer.hidden});
  CellState state = init;
  for (std::size_t t = 0; t < steps; ++t) {
    state = qk_cell_forward_impl(seq.row(t), state, layer,
                                 layer.kcfg.depth == 0 ? &tables : nullptr,
                                 caches ? &(*caches)[t] : nullptr);
    for (std::size_t h = 0; h < layer.hidden; ++h) hidden.at(t, h) = state.h[h];
  }
  if (final_state) *final_state = state;
  return hidden;
}

namespace {

Tensor classical_layer_forward(const Tensor& seq, const CellState& init, const LstmLayerView& layer,
                               std::vector<LstmCellCache>* caches) {
  if (seq.rank() != 2 || seq.extent(0) == 0) throw ShapeError("layer forward: empty sequence");
  const std::size_t steps = seq.extent(0);
  if (caches) caches->resize(steps);
  Tensor hidden({steps, layer.hidden});
  CellState state = init;
  for (std::size_t t = 0; t < steps; ++t) {
    state = classical_lstm_cell_forward(seq.row(t), state, layer, caches ? &(*caches)[t] : nullptr);
    for (std::size_t h = 0; h < layer.hidden; ++h) hidden.at(t, h) = state.h[h];
  }
  return hidden;
}

}  // namespace

Tensor model_forward(const Tensor& window, const ModelConfig& cfg, const ParamTree& params,
                     Rng* dropout_rng, bool training, ModelCache* cache) {
  cfg.validate();
  if (window.rank() != 2 || window.extent(0) != cfg.window || window.extent(1) != cfg.in_channels) {
    throw ShapeError("model forward: window must be " + std::to_string(cfg.window) + " x " +
                     std::to_string(cfg.in_channels));
  }
  if (training && cfg.dropout > 0.0 && !dropout_rng) {
    throw ShapeError("model forward: training mode with dropout needs an rng");
  }
  Rng unused(0);
  Rng& rng = dropout_rng ? *dropout_rng : unused;
  if (cache) {
    cache->conv.resize(cfg.conv.size());
    cache->rnn.assign(cfg.rnn_layers, {});
    cache->between_drop_masks.assign(cfg.rnn_layers > 0 ? cfg.rnn_layers - 1 : 0, Tensor());
    cache->training = training;
  }

  Tensor x = window;
  for (std::size_t l = 0; l < cfg.conv.size(); ++l) {
    x = conv1d_forward(x, params.at(conv_name(l, "weight")), params.at(conv_name(l, "bias")),
                       cache ? &cache->conv[l] : nullptr);
  }
  x = dropout(x, cfg.dropout, rng, training, cache ? &cache->conv_drop_mask : nullptr);

  for (std::size_t l = 0; l < cfg.rnn_layers; ++l) {
    CellState init = CellState::zeros(cfg.hidden);
    if (cfg.baseline) {
      x = classical_layer_forward(x, init, lstm_layer_view(cfg, params, l),
                                  cache ? &cache->rnn[l].lstm : nullptr);
    } else {
      x = qklstm_layer_forward(x, init, qk_layer_view(cfg, params, l),
                               cache ? &cache->rnn[l].qk : nullptr);
    }
    if (l + 1 < cfg.rnn_layers) {
      x = dropout(x, cfg.dropout, rng, training, cache ? &cache->between_drop_masks[l] : nullptr);
    }
  }

  const std::size_t steps = x.extent(0);
  std::vector<double> pooled(cfg.hidden, 0.0);
  if (cfg.mean_pool) {
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t h = 0; h < cfg.hidden; ++h) pooled[h] += x.at(t, h);
    }
    for (double& p : pooled) p /= static_cast<double>(steps);
  } else {
    for (std::size_t h = 0; h < cfg.hidden; ++h) pooled[h] = x.at(steps - 1, h);
  }

  const Tensor& hw = params.at("head.weight");
  const Tensor& hb = params.at("head.bias");
  Tensor logits({cfg.classes});
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    double acc = hb[c];
    const double* row = hw.data() + c * cfg.hidden;
    for (std::size_t h = 0; h < cfg.hidden; ++h) acc += row[h] * pooled[h];
    logits[c] = acc;
  }
  if (cache) cache->pooled = std::move(pooled);
  return logits;
}

ParamTree init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamTree params;

  std::size_t c_in = cfg.in_channels;
  for (std::size_t l = 0; l < cfg.conv.size(); ++l) {
    const auto& spec = cfg.conv[l];
    Tensor w({spec.filters, spec.width, c_in});
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.width * c_in));
    for (double& x : w.values()) x = (2.0 * rng.uniform() - 1.0) * bound;
    params.insert(conv_name(l, "weight"), std::move(w));
    params.insert(conv_name(l, "bias"), Tensor({spec.filters}));
    c_in = spec.filters;
  }

  for (std::size_t l = 0; l < cfg.rnn_layers; ++l) {
    const std::size_t dim = cfg.hidden + cfg.rnn_input_dim(l);
    if (cfg.baseline) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
      for (std::size_t g = 0; g < 4; ++g) {
        Tensor w({cfg.hidden, dim});
        for (double& x : w.values()) x = (2.0 * rng.uniform() - 1.0) * bound;
        params.insert(rnn_name(l, std::string("weight_") + kGateSuffix[g]), std::move(w));
        params.insert(rnn_name(l, std::string("bias_") + kGateSuffix[g]), Tensor({cfg.hidden}));
      }
    } else {
      Tensor z({cfg.landmarks, dim});
      for (double& x : z.values()) x = 0.5 * rng.normal();
      params.insert(rnn_name(l, "landmarks"), std::move(z));
      const double beta_sd = 1.0 / std::sqrt(static_cast<double>(cfg.landmarks));
      for (std::size_t g = 0; g < 4; ++g) {
        Tensor b({cfg.landmarks, cfg.hidden});
        for (double& x : b.values()) x = beta_sd * rng.normal();
        params.insert(rnn_name(l, std::string("beta_") + kGateSuffix[g]), std::move(b));
        params.insert(rnn_name(l, std::string("scale_") + kGateSuffix[g]), Tensor({dim}, 1.0));
        if (cfg.gate_bias) {
          params.insert(rnn_name(l, std::string("gate_bias_") + kGateSuffix[g]), Tensor({cfg.hidden}));
        }
      }
    }
  }

  Tensor hw({cfg.classes, cfg.hidden});
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  for (double& x : hw.values()) x = (2.0 * rng.uniform() - 1.0) * bound;
  params.insert("head.weight", std::move(hw));
  params.insert("head.bias", Tensor({cfg.classes}));
  return params;
}

namespace {

struct QkGradView {
  Tensor* landmarks = nullptr;
  std::array<Tensor*, 4> beta{}, scale{}, bias{};
};

struct LstmGradView {
  std::array<Tensor*, 4> weight{}, bias{};
};

QkGradView qk_grad_view(const ModelConfig& cfg, ParamTree& grads, std::size_t layer) {
  QkGradView v;
  v.landmarks = &grads.at(rnn_name(layer, "landmarks"));
  for (std::size_t g = 0; g < 4; ++g) {
    v.beta[g] = &grads.at(rnn_name(layer, std::string("beta_") + kGateSuffix[g]));
    v.scale[g] = &grads.at(rnn_name(layer, std::string("scale_") + kGateSuffix[g]));
    v.bias[g] = cfg.gate_bias ? &grads.at(rnn_name(layer, std::string("gate_bias_") + kGateSuffix[g]))
                              : nullptr;
  }
  return v;
}

LstmGradView lstm_grad_view(ParamTree& grads, std::size_t layer) {
  LstmGradView v;
  for (std::size_t g = 0; g < 4; ++g) {
    v.weight[g] = &grads.at(rnn_name(layer, std::string("weight_") + kGateSuffix[g]));
    v.bias[g] = &grads.at(rnn_name(layer, std::string("bias_") + kGateSuffix[g]));
  }
  return v;
}

// Backward through the shared gate combine. `dc` carries the cell-state
// gradient flowing in from step t+1 and leaves holding the one for t-1.
void gates_backward(const std::array<std::vector<double>, 4>& act,
                    const std::vector<double>& c_prev, const std::vector<double>& tanh_c,
                    std::span<const double> dh, std::vector<double>& dc,
                    std::array<std::vector<double>, 4>& da) {
  const std::size_t n = tanh_c.size();
  for (std::size_t h = 0; h < n; ++h) {
    const double f = act[kForget][h];
    const double i = act[kInput][h];
    const double ch = act[kCandidate][h];
    const double o = act[kOutput][h];
    const double dout = dh[h] * tanh_c[h];
    const double dcv = dc[h] + dh[h] * o * (1.0 - tanh_c[h] * tanh_c[h]);
    da[kOutput][h] = dout * o * (1.0 - o);
    da[kForget][h] = dcv * c_prev[h] * f * (1.0 - f);
    da[kInput][h] = dcv * ch * i * (1.0 - i);
    da[kCandidate][h] = dcv * i * (1.0 - ch * ch);
    dc[h] = dcv * f;
  }
}

Tensor qk_layer_backward(const QkLayerView& layer, const std::vector<QkCellCache>& caches,
                         const Tensor& d_out, QkGradView& grads) {
  const std::size_t steps = caches.size();
  const std::size_t n = layer.hidden;
  const std::size_t dim = layer.kcfg.feature_dim;
  const std::size_t n_land = layer.landmarks->extent(0);
  const bool depth0 = layer.kcfg.depth == 0;
  GateTables tables;
  if (depth0) tables = build_gate_tables(layer);

  Tensor d_in({steps, layer.input_dim});
  std::vector<double> dh_carry(n, 0.0), dc(n, 0.0), dh(n), dv(dim);
  std::array<std::vector<double>, 4> da;
  for (auto& a : da) a.resize(n);
  std::vector<double> cu(dim), su(dim), pref(dim + 1), suff(dim + 1);

  for (std::size_t t = steps; t-- > 0;) {
    const QkCellCache& cell = caches[t];
    for (std::size_t h = 0; h < n; ++h) dh[h] = d_out.at(t, h) + dh_carry[h];
    gates_backward(cell.act, cell.c_prev, cell.tanh_c, dh, dc, da);

    std::fill(dv.begin(), dv.end(), 0.0);
    for (std::size_t g = 0; g < 4; ++g) {
      if (grads.bias[g]) {
        double* gb = grads.bias[g]->data();
        for (std::size_t h = 0; h < n; ++h) gb[h] += da[g][h];
      }
      const double* w = layer.scale[g]->data();
      double* gw = grads.scale[g]->data();
      for (std::size_t j = 0; j < n_land; ++j) {
        const double kj = cell.kappa[g][j];
        const double* brow = layer.beta[g]->data() + j * n;
        double* gbrow = grads.beta[g]->data() + j * n;
        double dkappa = 0.0;
        for (std::size_t h = 0; h < n; ++h) {
          dkappa += da[g][h] * brow[h];
          gbrow[h] += da[g][h] * kj;
        }
        const double* z = layer.landmarks->data() + j * dim;
        double* gz = grads.landmarks->data() + j * dim;
        if (depth0) {
          const double* cv = cell.half_cos[g].data();
          const double* sv = cell.half_sin[g].data();
          const double* cz = tables.cz[g].data() + j * dim;
          const double* sz = tables.sz[g].data() + j * dim;
          for (std::size_t k = 0; k < dim; ++k) {
            cu[k] = cv[k] * cz[k] + sv[k] * sz[k];
            su[k] = sv[k] * cz[k] - cv[k] * sz[k];
          }
          pref[0] = 1.0;
          for (std::size_t k = 0; k < dim; ++k) pref[k + 1] = pref[k] * cu[k] * cu[k];
          suff[dim] = 1.0;
          for (std::size_t k = dim; k-- > 0;) suff[k] = suff[k + 1] * cu[k] * cu[k];
          for (std::size_t k = 0; k < dim; ++k) {
            const double du = dkappa * -2.0 * cu[k] * su[k] * (pref[k] * suff[k + 1]);
            dv[k] += du * 0.5 * w[k];
            gz[k] -= du * 0.5 * w[k];
            gw[k] += du * 0.5 * (cell.v[k] - z[k]);
          }
        } else {
          KernelGrad kg = kernel_grad(cell.v, layer.landmarks->row(j), layer.scale[g]->values(),
                                      layer.kcfg);
          for (std::size_t k = 0; k < dim; ++k) {
            dv[k] += dkappa * kg.da[k];
            gz[k] += dkappa * kg.db[k];
            gw[k] += dkappa * kg.dw[k];
          }
        }
      }
    }
    for (std::size_t h = 0; h < n; ++h) dh_carry[h] = dv[h];
    for (std::size_t k = 0; k < layer.input_dim; ++k) d_in.at(t, k) = dv[n + k];
  }
  return d_in;
}

Tensor classical_layer_backward(const LstmLayerView& layer, const std::vector<LstmCellCache>& caches,
                                const Tensor& d_out, LstmGradView& grads) {
  const std::size_t steps = caches.size();
  const std::size_t n = layer.hidden;
  const std::size_t dim = n + layer.input_dim;

  Tensor d_in({steps, layer.input_dim});
  std::vector<double> dh_carry(n, 0.0), dc(n, 0.0), dh(n), dv(dim);
  std::array<std::vector<double>, 4> da;
  for (auto& a : da) a.resize(n);

  for (std::size_t t = steps; t-- > 0;) {
    const LstmCellCache& cell = caches[t];
    for (std::size_t h = 0; h < n; ++h) dh[h] = d_out.at(t, h) + dh_carry[h];
    gates_backward(cell.act, cell.c_prev, cell.tanh_c, dh, dc, da);

    std::fill(dv.begin(), dv.end(), 0.0);
    for (std::size_t g = 0; g < 4; ++g) {
      double* gb = grads.bias[g]->data();
      for (std::size_t h = 0; h < n; ++h) {
        const double d = da[g][h];
        gb[h] += d;
        const double* wrow = layer.weight[g]->data() + h * dim;
        double* gwrow = grads.weight[g]->data() + h * dim;
        for (std::size_t k = 0; k < dim; ++k) {
          gwrow[k] += d * cell.v[k];
          dv[k] += d * wrow[k];
        }
      }
    }
    for (std::size_t h = 0; h < n; ++h) dh_carry[h] = dv[h];
    for (std::size_t k = 0; k < layer.input_dim; ++k) d_in.at(t, k) = dv[n + k];
  }
  return d_in;
}

Tensor apply_mask(const Tensor& d, const Tensor& mask) {
  Tensor out(d.shape());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] * mask[i];
  return out;
}

}  // namespace

ParamTree model_backward(const ModelConfig& cfg, const ParamTree& params, const ModelCache& cache,
                         const Tensor& dlogits) {
  if (!cache.training || cache.rnn.size() != cfg.rnn_layers || cache.conv.size() != cfg.conv.size()) {
    throw ShapeError("model backward: cache is missing or not from a training-mode forward");
  }
  if (dlogits.size() != cfg.classes) throw ShapeError("model backward: dlogits size mismatch");

  ParamTree grads = ParamTree::zeros_like(params);
  const std::size_t n = cfg.hidden;
  const std::size_t steps = cfg.conv_out_len();

  // classifier
  const Tensor& hw = params.at("head.weight");
  Tensor& ghw = grads.at("head.weight");
  Tensor& ghb = grads.at("head.bias");
  std::vector<double> dpool(n, 0.0);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    const double dl = dlogits[c];
    ghb[c] += dl;
    const double* row = hw.data() + c * n;
    double* grow = ghw.data() + c * n;
    for (std::size_t h = 0; h < n; ++h) {
      grow[h] += dl * cache.pooled[h];
      dpool[h] += dl * row[h];
    }
  }

  Tensor d_seq({steps, n});
  if (cfg.mean_pool) {
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t h = 0; h < n; ++h) d_seq.at(t, h) = dpool[h] / static_cast<double>(steps);
    }
  } else {
    for (std::size_t h = 0; h < n; ++h) d_seq.at(steps - 1, h) = dpool[h];
  }

  for (std::size_t l = cfg.rnn_layers; l-- > 0;) {
    Tensor d_in;
    if (cfg.baseline) {
      LstmGradView gv = lstm_grad_view(grads, l);
      d_in = classical_layer_backward(lstm_layer_view(cfg, params, l), cache.rnn[l].lstm, d_seq, gv);
    } else {
      QkGradView gv = qk_grad_view(cfg, grads, l);
      d_in = qk_layer_backward(qk_layer_view(cfg, params, l), cache.rnn[l].qk, d_seq, gv);
    }
    if (l > 0) {
      d_seq = apply_mask(d_in, cache.between_drop_masks[l - 1]);
    } else {
      d_seq = apply_mask(d_in, cache.conv_drop_mask);
    }
  }

  Tensor upstream = std::move(d_seq);
  for (std::size_t l = cfg.conv.size(); l-- > 0;) {
    const Tensor& w = params.at(conv_name(l, "weight"));
    Conv1dGrads g = conv1d_backward(cache.conv[l], w, upstream);
    grads.at(conv_name(l, "weight")) = std::move(g.weights);
    grads.at(conv_name(l, "bias")) = std::move(g.bias);
    upstream = std::move(g.input);
  }
  return grads;
}

ParamCount count_params(const ModelConfig& cfg) {
  cfg.validate();
  ParamCount out;
  std::size_t c_in = cfg.in_channels;
  for (std::size_t l = 0; l < cfg.conv.size(); ++l) {
    const auto& spec = cfg.conv[l];
    const std::size_t n = spec.filters * (spec.width * c_in + 1);
    out.rows.push_back({"conv." + std::to_string(l), n});
    c_in = spec.filters;
  }
  for (std::size_t l = 0; l < cfg.rnn_layers; ++l) {
    const std::size_t m = cfg.rnn_input_dim(l);
    const std::size_t n = cfg.hidden;
    std::size_t count;
    if (cfg.baseline) {
      count = 4 * (n * (m + n) + n);
    } else {
      count = cfg.landmarks * (m + n) + 4 * cfg.landmarks * n + 4 * (m + n);
      if (cfg.gate_bias) count += 4 * n;
    }
    out.rows.push_back({"rnn." + std::to_string(l), count});
  }
  out.rows.push_back({"head", cfg.hidden * cfg.classes + cfg.classes});
  for (const auto& r : out.rows) out.total += r.count;
  return out;
}

}  // namespace fqkl
