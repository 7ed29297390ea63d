#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddpolab/params.hpp"

namespace ddpolab::nn {

// Per-parameter Adam moments. Moment tensors mirror the parameter shapes
// and order; t counts completed steps.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<std::pair<std::string, Tensor>> m;
  std::vector<std::pair<std::string, Tensor>> v;

  static AdamState init(const ModelParams& params, double lr);
};

// Standard bias-corrected Adam update, in place. Bumps params.revision.
// Throws on non-finite gradients or misaligned shapes.
void adam_step(ModelParams& params, const GradSet& grads, AdamState& state);

}  // namespace ddpolab::nn
