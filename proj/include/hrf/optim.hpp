#pragma once

#include <cmath>
#include <unordered_map>

#include "hrf/nn.hpp"

namespace hrf {

// lr = base * final_factor^(iter/total), the exponential decay schedule.
inline float lr_schedule(int64_t iter, int64_t total = 10000, float base = 1e-3f,
                         float final_factor = 0.1f) {
  if (total <= 0) return base;
  double t = (double)iter / (double)total;
  return (float)(base * std::pow((double)final_factor, t));
}

// Adam with bias correction. Moments are kept per parameter name so the
// optimizer state survives checkpointing; per-parameter lr_scale lets the
// pose/shape corrections run at a reduced rate.
class Adam {
 public:
  struct Moments {
    Tensor m, v;
  };

  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  // One update over all parameters in the store; `step` is 1-based.
  void step(ParamStore& store, int64_t step_count, float lr) {
    for (auto& p : store.params) update(p, step_count, lr * p.lr_scale);
  }

  void update(Parameter& p, int64_t step_count, float lr) {
    Moments& mo = moments_[p.name];
    if (mo.m.data.empty()) {
      mo.m = Tensor(p.value.shape);
      mo.v = Tensor(p.value.shape);
    }
    const float bc1 = 1.f - std::pow(beta1, (float)step_count);
    const float bc2 = 1.f - std::pow(beta2, (float)step_count);
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      float g = p.grad[i];
      mo.m[i] = beta1 * mo.m[i] + (1.f - beta1) * g;
      mo.v[i] = beta2 * mo.v[i] + (1.f - beta2) * g * g;
      float mhat = mo.m[i] / bc1;
      float vhat = mo.v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }

  std::unordered_map<std::string, Moments>& moments() { return moments_; }
  const std::unordered_map<std::string, Moments>& moments() const { return moments_; }

 private:
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace hrf
