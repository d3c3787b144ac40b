#include "fqkl/qkernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fqkl/errors.hpp"

namespace fqkl {

namespace {

constexpr std::size_t kMaxBlockQubits = 10;

void apply_ry(BlockStatevector& state, std::size_t qubit, double theta) {
  const double c = std::cos(0.5 * theta);
  const double s = std::sin(0.5 * theta);
  const std::size_t bit = std::size_t{1} << qubit;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (i & bit) continue;
    const auto a0 = state[i];
    const auto a1 = state[i | bit];
    state[i] = c * a0 - s * a1;
    state[i | bit] = s * a0 + c * a1;
  }
}

void apply_cnot(BlockStatevector& state, std::size_t control, std::size_t target) {
  const std::size_t cb = std::size_t{1} << control;
  const std::size_t tb = std::size_t{1} << target;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if ((i & cb) && !(i & tb)) std::swap(state[i], state[i | tb]);
  }
}

// One shifted RY occurrence for parameter-shift evaluations. occurrence < 0
// disables the shift.
struct AngleShift {
  int occurrence = -1;
  std::size_t qubit = 0;
  double delta = 0.0;
};

double shifted(const std::span<const double> angles, std::size_t qubit, int occurrence,
               const AngleShift& shift) {
  double t = angles[qubit];
  if (shift.occurrence == occurrence && shift.qubit == qubit) t += shift.delta;
  return t;
}

// Applies the block encoding unitary (or its adjoint) to `state`.
// Gate order: RY layer (occurrence 0), then per depth layer a CNOT ring
// followed by an RY re-upload layer (occurrences 1..depth).
void apply_block_unitary(BlockStatevector& state, std::span<const double> angles,
                         std::size_t q, std::size_t depth, bool adjoint,
                         const AngleShift& shift = {}) {
  auto ry_layer = [&](int occurrence, double sign) {
    for (std::size_t k = 0; k < q; ++k) apply_ry(state, k, sign * shifted(angles, k, occurrence, shift));
  };
  auto cnot_ring = [&](bool reversed) {
    if (q == 1) return;
    if (!reversed) {
      for (std::size_t k = 0; k < q; ++k) apply_cnot(state, k, (k + 1) % q);
    } else {
      for (std::size_t k = q; k-- > 0;) apply_cnot(state, k, (k + 1) % q);
    }
  };

  if (!adjoint) {
    ry_layer(0, 1.0);
    for (std::size_t r = 1; r <= depth; ++r) {
      cnot_ring(false);
      ry_layer(static_cast<int>(r), 1.0);
    }
  } else {
    for (std::size_t r = depth; r >= 1; --r) {
      ry_layer(static_cast<int>(r), -1.0);
      cnot_ring(true);
    }
    ry_layer(0, -1.0);
  }
}

// |<0|U(b)^dag U(a)|0>|^2 for one block, with an optional shifted angle on
// either side.
double block_fidelity(std::span<const double> angles_a, std::span<const double> angles_b,
                      std::size_t q, std::size_t depth, const AngleShift& shift_a = {},
                      const AngleShift& shift_b = {}) {
  BlockStatevector state(std::size_t{1} << q, {0.0, 0.0});
  state[0] = 1.0;
  apply_block_unitary(state, angles_a, q, depth, /*adjoint=*/false, shift_a);
  apply_block_unitary(state, angles_b, q, depth, /*adjoint=*/true, shift_b);
  return std::norm(state[0]);
}

// Padded per-block angles theta_k = w_k x_k; padding encodes angle 0.
std::vector<double> block_angles(std::span<const double> x, std::span<const double> w,
                                 std::size_t block, std::size_t q) {
  std::vector<double> angles(q, 0.0);
  const std::size_t lo = block * q;
  const std::size_t hi = std::min(x.size(), lo + q);
  for (std::size_t d = lo; d < hi; ++d) angles[d - lo] = w[d] * x[d];
  return angles;
}

void check_dims(std::span<const double> a, std::span<const double> b,
                std::span<const double> w, const KernelConfig& cfg) {
  cfg.validate();
  if (a.size() != cfg.feature_dim || b.size() != cfg.feature_dim || w.size() != cfg.feature_dim) {
    throw ShapeError("kernel: input sizes (" + std::to_string(a.size()) + ", " +
                     std::to_string(b.size()) + ", " + std::to_string(w.size()) +
                     ") do not match feature_dim " + std::to_string(cfg.feature_dim));
  }
}

}  // namespace

void KernelConfig::validate() const {
  if (feature_dim < 1) throw ShapeError("kernel config: feature_dim must be >= 1");
  if (block_size < 1 || block_size > kMaxBlockQubits) {
    throw ShapeError("kernel config: block_size must lie in [1, " +
                     std::to_string(kMaxBlockQubits) + "], got " + std::to_string(block_size));
  }
}

BlockStatevector encode_block(std::span<const double> x_block, std::span<const double> w_block,
                              std::size_t depth) {
  const std::size_t q = x_block.size();
  if (q < 1 || q > kMaxBlockQubits || w_block.size() != q) {
    throw ShapeError("encode_block: block size out of range or w/x mismatch");
  }
  std::vector<double> angles(q);
  for (std::size_t k = 0; k < q; ++k) angles[k] = w_block[k] * x_block[k];
  BlockStatevector state(std::size_t{1} << q, {0.0, 0.0});
  state[0] = 1.0;
  apply_block_unitary(state, angles, q, depth, /*adjoint=*/false);
  return state;
}

double kernel_value_closed_form(std::span<const double> a, std::span<const double> b,
                                std::span<const double> w) {
  double kappa = 1.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double c = std::cos(0.5 * w[k] * (a[k] - b[k]));
    kappa *= c * c;
  }
  return kappa;
}

double kernel_value_statevector(std::span<const double> a, std::span<const double> b,
                                std::span<const double> w, const KernelConfig& cfg) {
  check_dims(a, b, w, cfg);
  const std::size_t q = cfg.block_size;
  double kappa = 1.0;
  for (std::size_t blk = 0; blk < cfg.num_blocks(); ++blk) {
    const auto ta = block_angles(a, w, blk, q);
    const auto tb = block_angles(b, w, blk, q);
    kappa *= block_fidelity(ta, tb, q, cfg.depth);
  }
  return kappa;
}

double kernel_value(std::span<const double> a, std::span<const double> b,
                    std::span<const double> w, const KernelConfig& cfg) {
  check_dims(a, b, w, cfg);
  if (std::equal(a.begin(), a.end(), b.begin())) return 1.0;  // fidelity of identical states
  if (cfg.depth == 0) return kernel_value_closed_form(a, b, w);
  // canonical argument order keeps kappa(a, b) == kappa(b, a) bit-exact
  const bool swap = std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
  return swap ? kernel_value_statevector(b, a, w, cfg) : kernel_value_statevector(a, b, w, cfg);
}

KernelGrad kernel_grad(std::span<const double> a, std::span<const double> b,
                       std::span<const double> w, const KernelConfig& cfg) {
  check_dims(a, b, w, cfg);
  if (cfg.depth > 0) return kernel_grad_parameter_shift(a, b, w, cfg);

  const std::size_t d = cfg.feature_dim;
  KernelGrad g{std::vector<double>(d), std::vector<double>(d), std::vector<double>(d)};
  std::vector<double> cs(d), sn(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double u = 0.5 * w[k] * (a[k] - b[k]);
    cs[k] = std::cos(u);
    sn[k] = std::sin(u);
  }
  // rest[k] = prod_{j != k} cos^2(u_j), assembled from prefix/suffix products
  // so zero factors need no division.
  std::vector<double> prefix(d + 1, 1.0), suffix(d + 1, 1.0);
  for (std::size_t k = 0; k < d; ++k) prefix[k + 1] = prefix[k] * cs[k] * cs[k];
  for (std::size_t k = d; k-- > 0;) suffix[k] = suffix[k + 1] * cs[k] * cs[k];
  for (std::size_t k = 0; k < d; ++k) {
    const double rest = prefix[k] * suffix[k + 1];
    const double dcos2 = -rest * cs[k] * sn[k];  // d kappa / du_k up to factor 2
    g.da[k] = dcos2 * w[k];
    g.db[k] = -dcos2 * w[k];
    g.dw[k] = dcos2 * (a[k] - b[k]);
  }
  return g;
}

KernelGrad kernel_grad_parameter_shift(std::span<const double> a, std::span<const double> b,
                                       std::span<const double> w, const KernelConfig& cfg) {
  check_dims(a, b, w, cfg);
  const std::size_t d = cfg.feature_dim;
  const std::size_t q = cfg.block_size;
  const std::size_t blocks = cfg.num_blocks();
  KernelGrad g{std::vector<double>(d), std::vector<double>(d), std::vector<double>(d)};

  std::vector<double> fid(blocks);
  std::vector<std::vector<double>> ta(blocks), tb(blocks);
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    ta[blk] = block_angles(a, w, blk, q);
    tb[blk] = block_angles(b, w, blk, q);
    fid[blk] = block_fidelity(ta[blk], tb[blk], q, cfg.depth);
  }
  std::vector<double> prefix(blocks + 1, 1.0), suffix(blocks + 1, 1.0);
  for (std::size_t i = 0; i < blocks; ++i) prefix[i + 1] = prefix[i] * fid[i];
  for (std::size_t i = blocks; i-- > 0;) suffix[i] = suffix[i + 1] * fid[i];

  constexpr double kShift = M_PI / 2.0;
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const double rest = prefix[blk] * suffix[blk + 1];
    for (std::size_t k = 0; k < q; ++k) {
      const std::size_t dim = blk * q + k;
      if (dim >= d) break;  // padded qubits carry no trainable angle
      for (int occ = 0; occ <= static_cast<int>(cfg.depth); ++occ) {
        // a side: angle w_dim * a_dim appears in U(a) at this occurrence.
        {
          const double plus = block_fidelity(ta[blk], tb[blk], q, cfg.depth,
                                             AngleShift{occ, k, kShift}, {});
          const double minus = block_fidelity(ta[blk], tb[blk], q, cfg.depth,
                                              AngleShift{occ, k, -kShift}, {});
          const double dtheta = 0.5 * (plus - minus) * rest;
          g.da[dim] += dtheta * w[dim];
          g.dw[dim] += dtheta * a[dim];
        }
        // b side: angle w_dim * b_dim appears in U(b)^dag at this occurrence.
        {
          const double plus = block_fidelity(ta[blk], tb[blk], q, cfg.depth, {},
                                             AngleShift{occ, k, kShift});
          const double minus = block_fidelity(ta[blk], tb[blk], q, cfg.depth, {},
                                              AngleShift{occ, k, -kShift});
          const double dtheta = 0.5 * (plus - minus) * rest;
          g.db[dim] += dtheta * w[dim];
          g.dw[dim] += dtheta * b[dim];
        }
      }
    }
  }
  return g;
}

Tensor gram_matrix(const Tensor& x, std::span<const double> w, const KernelConfig& cfg) {
  if (x.rank() != 2) throw ShapeError("gram_matrix: X must be N x D");
  const std::size_t n = x.extent(0);
  Tensor g({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = kernel_value(x.row(i), x.row(j), w, cfg);
      g.at(i, j) = v;
      g.at(j, i) = v;
    }
  }
  return g;
}

}  // namespace fqkl
