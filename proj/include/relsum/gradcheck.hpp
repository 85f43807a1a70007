#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "relsum/graph.hpp"
#include "relsum/tensor.hpp"

namespace relsum {

// A differentiable scalar function of the parameters, expressed on a tape.
using LossFn = std::function<Value(Graph&, const ParameterStore&)>;

// Central-difference verification of reverse-mode gradients. Returns the max
// over all parameter elements of |analytic - numeric| / max(|analytic|,
// |numeric|, 1e-8). The function must be deterministic; two evaluations at
// the same point are compared to catch accidental randomness.
inline double grad_check(const LossFn& fn, ParameterStore& params, double h) {
  if (h <= 0.0) fail(Errc::bad_argument, "grad_check: h must be positive");

  auto eval = [&](Graph& g) {
    Value v = fn(g, params);
    const Tensor& t = g.out(v);
    if (t.numel() != 1) fail(Errc::shape_mismatch, "grad_check: fn must produce a scalar");
    return std::pair(v, t.data[0]);
  };

  Graph g0;
  auto [loss0, v0] = eval(g0);
  {
    Graph g1;
    auto [loss1, v1] = eval(g1);
    (void)loss1;
    if (v0 != v1) fail(Errc::bad_argument, "grad_check: fn is not deterministic");
  }
  GradMap analytic = g0.backward(loss0, params);

  double max_rel = 0.0;
  for (auto& [name, ga] : analytic) {
    Tensor& p = params.get(name);
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double keep = p.data[i];
      p.data[i] = keep + h;
      Graph gp;
      const double fp = eval(gp).second;
      p.data[i] = keep - h;
      Graph gm;
      const double fm = eval(gm).second;
      p.data[i] = keep;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = ga.data[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace relsum
