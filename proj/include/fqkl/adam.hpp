#pragma once

#include <cstdint>

#include "fqkl/param_tree.hpp"

namespace fqkl {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // coupled L2: added to the gradient
};

struct AdamState {
  std::uint64_t step = 0;
  ParamTree m;
  ParamTree v;

  static AdamState init(const ParamTree& params) {
    return {0, ParamTree::zeros_like(params), ParamTree::zeros_like(params)};
  }
};

/// One bias-corrected Adam step, in place. Deterministic: identical inputs
/// give bit-identical outputs.
void adam_step(ParamTree& params, const ParamTree& grads, AdamState& state,
               const AdamHyper& hyper);

}  // namespace fqkl
