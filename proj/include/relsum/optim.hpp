#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>

#include "relsum/common.hpp"
#include "relsum/tensor.hpp"

namespace relsum {

struct AdamwConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// First/second moment buffers, created lazily per parameter.
struct OptimizerState {
  AdamwConfig cfg;
  int64_t step = 0;
  std::unordered_map<std::string, std::pair<Tensor, Tensor>> moments;
};

// Decoupled weight decay AdamW with bias-corrected moments.
inline void adamw_step(ParameterStore& params, const GradMap& grads, OptimizerState& state, double lr) {
  state.step += 1;
  const auto& c = state.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  for (const auto& [name, g] : grads) {
    Tensor& p = params.get(name);
    if (!g.same_shape(p))
      fail(Errc::shape_mismatch, "adamw_step: gradient shape " + shape_str(g.shape) +
                                     " does not match parameter " + name + " " + shape_str(p.shape));
    if (!g.all_finite()) fail(Errc::non_finite, "adamw_step: non-finite gradient for parameter " + name);

    auto [it, inserted] = state.moments.try_emplace(name, Tensor::zeros(p.shape), Tensor::zeros(p.shape));
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;

    for (int64_t i = 0; i < p.numel(); ++i) {
      p.data[i] -= lr * c.weight_decay * p.data[i];  // decoupled decay
      m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * g.data[i];
      v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

// scaled gradient accumulation across a batch of per-example backward passes
inline void accumulate_grads(GradMap& acc, const GradMap& g, double scale) {
  if (acc.empty()) {
    acc = g;
    for (auto& [name, t] : acc)
      for (auto& v : t.data) v *= scale;
    return;
  }
  if (acc.size() != g.size()) fail(Errc::shape_mismatch, "accumulate_grads: mismatched gradient maps");
  for (size_t i = 0; i < acc.size(); ++i)
    for (int64_t j = 0; j < acc[i].second.numel(); ++j)
      acc[i].second.data[j] += scale * g[i].second.data[j];
}

// peak * (1 + cos(pi * step/total)) / 2, no warmup
inline double cosine_lr(int64_t step, int64_t total_steps, double peak) {
  if (total_steps <= 0) fail(Errc::bad_argument, "cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) fail(Errc::bad_argument, "cosine_lr: step outside [0, total_steps]");
  if (peak <= 0.0) fail(Errc::bad_argument, "cosine_lr: peak must be positive");
  return peak * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps))) / 2.0;
}

}  // namespace relsum
