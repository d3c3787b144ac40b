#include "fqkl/adam.hpp"

#include <cmath>

#include "fqkl/errors.hpp"

namespace fqkl {

void adam_step(ParamTree& params, const ParamTree& grads, AdamState& state,
               const AdamHyper& hyper) {
  if (!params.congruent_with(grads)) throw ShapeError("adam_step: gradient tree not congruent");
  if (!params.congruent_with(state.m)) throw ShapeError("adam_step: optimizer state not congruent");

  state.step += 1;
  const double b1 = hyper.beta1;
  const double b2 = hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  auto p = params.begin();
  auto g = grads.begin();
  auto m = state.m.begin();
  auto v = state.v.begin();
  for (; p != params.end(); ++p, ++g, ++m, ++v) {
    double* pv = p->second.data();
    const double* gv = g->second.data();
    double* mv = m->second.data();
    double* vv = v->second.data();
    for (std::size_t i = 0; i < p->second.size(); ++i) {
      const double grad = gv[i] + hyper.weight_decay * pv[i];
      mv[i] = b1 * mv[i] + (1.0 - b1) * grad;
      vv[i] = b2 * vv[i] + (1.0 - b2) * grad * grad;
      const double mhat = mv[i] / c1;
      const double vhat = vv[i] / c2;
      pv[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
  }
}

}  // namespace fqkl
