#pragma once

#include <functional>

#include "fqkl/param_tree.hpp"

namespace fqkl {

/// Central-difference gradient (f(x+h) - f(x-h)) / 2h per element. `f` must
/// be a pure, deterministic function of the tree. Used as the reference
/// against every analytic backward pass in this repo.
ParamTree finite_diff_grad(const std::function<double(const ParamTree&)>& f,
                           const ParamTree& params, double h = 1e-5);

}  // namespace fqkl
