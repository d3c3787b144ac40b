#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "fqkl/tensor.hpp"

namespace fqkl {

/// Shape of the fidelity-kernel circuit. Features are angle-encoded into
/// independent blocks of `block_size` qubits; the full kernel is the product
/// of per-block fidelities. The last block is zero-padded when feature_dim
/// is not a multiple of block_size.
struct KernelConfig {
  std::size_t feature_dim = 1;  // D
  std::size_t block_size = 4;   // qubits per block, 1..10
  std::size_t depth = 0;        // entangling layers

  std::size_t num_blocks() const { return (feature_dim + block_size - 1) / block_size; }
  void validate() const;
};

/// 2^q complex amplitudes of one block.
using BlockStatevector = std::vector<std::complex<double>>;

/// Encode one padded feature block: starting from |0...0>, apply RY(w_k x_k)
/// on qubit k, then `depth` repetitions of [CNOT ring (k -> k+1 mod q,
/// skipped for q = 1) followed by an RY(w_k x_k) re-upload layer].
BlockStatevector encode_block(std::span<const double> x_block, std::span<const double> w_block,
                              std::size_t depth);

/// Depth-0 kernel in closed form: prod_k cos^2(w_k (a_k - b_k) / 2).
double kernel_value_closed_form(std::span<const double> a, std::span<const double> b,
                                std::span<const double> w);

/// Kernel by statevector simulation at any depth: per block, apply U(a) then
/// the adjoint of U(b) to |0...0> and read |amplitude of |0...0>|^2.
double kernel_value_statevector(std::span<const double> a, std::span<const double> b,
                                std::span<const double> w, const KernelConfig& cfg);

/// Fidelity kernel in [0, 1]. Dispatches to the closed form at depth 0 and
/// to the simulator otherwise; identical inputs short-circuit to exactly 1.
double kernel_value(std::span<const double> a, std::span<const double> b,
                    std::span<const double> w, const KernelConfig& cfg);

struct KernelGrad {
  std::vector<double> da, db, dw;
};

/// Exact kernel gradients. Depth 0 differentiates the product-of-cosines
/// form analytically; depth >= 1 uses the two-term parameter-shift rule per
/// rotation angle, chain-ruled back to a, b and w.
KernelGrad kernel_grad(std::span<const double> a, std::span<const double> b,
                       std::span<const double> w, const KernelConfig& cfg);

/// Parameter-shift gradients at any depth (including 0, where they must
/// agree with the analytic path). Exposed separately so the two routes can
/// be compared.
KernelGrad kernel_grad_parameter_shift(std::span<const double> a, std::span<const double> b,
                                       std::span<const double> w, const KernelConfig& cfg);

/// Pairwise kernel matrix of the rows of X (N x D). Each pair is evaluated
/// once (j >= i) and mirrored, so the result is exactly symmetric.
Tensor gram_matrix(const Tensor& x, std::span<const double> w, const KernelConfig& cfg);

}  // namespace fqkl
