#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fqkl/nn_ops.hpp"
#include "fqkl/param_tree.hpp"
#include "fqkl/qkernel.hpp"
#include "fqkl/rng.hpp"
#include "fqkl/tensor.hpp"

namespace fqkl {

struct ConvLayerSpec {
  std::size_t filters = 64;
  std::size_t width = 11;
};

/// Network shape: temporal conv stack -> recurrent layers -> affine head.
/// The recurrent cells use kernel gates by default; `baseline` swaps in
/// classical affine-gate cells of the same structure.
struct ModelConfig {
  std::size_t in_channels = 3;                 // d
  std::size_t window = 100;                    // T
  std::vector<ConvLayerSpec> conv = {{64, 11}};
  std::size_t rnn_layers = 2;
  std::size_t hidden = 64;                     // n
  std::size_t landmarks = 16;                  // N
  std::size_t kernel_block = 4;                // qubits per block
  std::size_t kernel_depth = 0;                // entangling layers
  std::size_t classes = 2;
  double dropout = 0.5;
  bool gate_bias = false;
  bool baseline = false;
  bool mean_pool = false;  // classifier reads mean over steps instead of the last step

  void validate() const;
  std::size_t conv_out_len() const;
  std::size_t conv_out_channels() const;
  /// Feature input width of recurrent layer `layer` (conv channels for the
  /// first layer, hidden size after).
  std::size_t rnn_input_dim(std::size_t layer) const;
  /// Kernel shape for layer `layer`; feature_dim = hidden + rnn_input_dim.
  KernelConfig kernel_config(std::size_t layer) const;
};

// Gate order used everywhere: forget, input, candidate, output.
enum Gate : std::size_t { kForget = 0, kInput = 1, kCandidate = 2, kOutput = 3 };
inline constexpr std::array<const char*, 4> kGateSuffix = {"f", "i", "c", "o"};

struct CellState {
  std::vector<double> h, c;
  static CellState zeros(std::size_t n) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  }
};

/// Non-owning view of one kernel-gate layer inside a ParamTree.
struct QkLayerView {
  const Tensor* landmarks = nullptr;             // N x D_in
  std::array<const Tensor*, 4> beta{};           // N x n each
  std::array<const Tensor*, 4> scale{};          // D_in each
  std::array<const Tensor*, 4> bias{};           // n each; nullptr when disabled
  std::size_t input_dim = 0;                     // p
  std::size_t hidden = 0;                        // n
  KernelConfig kcfg;
};

/// Non-owning view of one classical-baseline layer.
struct LstmLayerView {
  std::array<const Tensor*, 4> weight{};  // n x D_in each
  std::array<const Tensor*, 4> bias{};    // n each
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
};

QkLayerView qk_layer_view(const ModelConfig& cfg, const ParamTree& params, std::size_t layer);
LstmLayerView lstm_layer_view(const ModelConfig& cfg, const ParamTree& params, std::size_t layer);

struct QkCellCache {
  std::vector<double> v;                        // [h_prev; x], D_in
  std::array<std::vector<double>, 4> kappa;     // per gate: N kernel values
  std::array<std::vector<double>, 4> half_cos;  // per gate: cos(w_k v_k / 2), depth-0 path only
  std::array<std::vector<double>, 4> half_sin;
  std::array<std::vector<double>, 4> act;       // f, i, chat, o (n each)
  std::vector<double> c_prev, c, tanh_c;
};

struct LstmCellCache {
  std::vector<double> v;
  std::array<std::vector<double>, 4> act;
  std::vector<double> c_prev, c, tanh_c;
};

/// One kernel-gate cell step. Gate g pre-activation is
/// sum_j kernel(v, Z_j; w_g) * beta_j_g with v = [prev.h; x_feat]; the gate
/// combine is the standard LSTM memory update.
CellState qklstm_cell_forward(std::span<const double> x_feat, const CellState& prev,
                              const QkLayerView& layer, QkCellCache* cache = nullptr);

CellState classical_lstm_cell_forward(std::span<const double> x_feat, const CellState& prev,
                                      const LstmLayerView& layer, LstmCellCache* cache = nullptr);

/// Left-to-right recurrence over seq (T x p). Returns the T x n hidden
/// sequence; optionally fills per-step caches and the final state.
Tensor qklstm_layer_forward(const Tensor& seq, const CellState& init, const QkLayerView& layer,
                            std::vector<QkCellCache>* caches = nullptr,
                            CellState* final_state = nullptr);

struct RnnLayerCache {
  std::vector<QkCellCache> qk;
  std::vector<LstmCellCache> lstm;
};

struct ModelCache {
  std::vector<Conv1dCache> conv;
  Tensor conv_drop_mask;
  std::vector<Tensor> between_drop_masks;  // one per layer boundary
  std::vector<RnnLayerCache> rnn;
  std::vector<double> pooled;  // classifier input (last h or step mean)
  bool training = false;
};

/// Window (T x d) -> class logits. Training mode draws dropout masks from
/// `dropout_rng` and, when `cache` is given, retains everything backward
/// needs; eval mode is a pure function of (window, params).
Tensor model_forward(const Tensor& window, const ModelConfig& cfg, const ParamTree& params,
                     Rng* dropout_rng, bool training, ModelCache* cache = nullptr);

/// Reverse-mode gradients for every trainable parameter, unrolled over the
/// full sequence.
ParamTree model_backward(const ModelConfig& cfg, const ParamTree& params, const ModelCache& cache,
                         const Tensor& dlogits);

ParamTree init_params(const ModelConfig& cfg, Rng& rng);

struct ParamCountRow {
  std::string component;
  std::size_t count = 0;
};
struct ParamCount {
  std::vector<ParamCountRow> rows;
  std::size_t total = 0;
};

/// Closed-form per-component parameter table (matches init_params sizes).
ParamCount count_params(const ModelConfig& cfg);

}  // namespace fqkl
