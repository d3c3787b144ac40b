#include "fqkl/finite_diff.hpp"

namespace fqkl {

ParamTree finite_diff_grad(const std::function<double(const ParamTree&)>& f,
                           const ParamTree& params, double h) {
  ParamTree grad = ParamTree::zeros_like(params);
  ParamTree probe = params;
  auto g = grad.begin();
  auto p = probe.begin();
  for (; g != grad.end(); ++g, ++p) {
    for (std::size_t i = 0; i < g->second.size(); ++i) {
      const double saved = p->second[i];
      p->second[i] = saved + h;
      const double hi = f(probe);
      p->second[i] = saved - h;
      const double lo = f(probe);
      p->second[i] = saved;
      g->second[i] = (hi - lo) / (2.0 * h);
    }
  }
  return grad;
}

}  // namespace fqkl
