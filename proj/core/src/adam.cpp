#include "ddpolab/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace ddpolab::nn {

AdamState AdamState::init(const ModelParams& params, double lr) {
  AdamState s;
  s.lr = lr;
  s.m.reserve(params.entries.size());
  s.v.reserve(params.entries.size());
  for (const auto& e : params.entries) {
    s.m.emplace_back(e.name, Tensor::zeros(e.value.shape()));
    s.v.emplace_back(e.name, Tensor::zeros(e.value.shape()));
  }
  return s;
}

void adam_step(ModelParams& params, const GradSet& grads, AdamState& state) {
  const std::size_t n = params.entries.size();
  if (grads.grads.size() != n || state.m.size() != n || state.v.size() != n) {
    throw std::invalid_argument("adam_step: parameter/gradient/state counts differ");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [gname, g] = grads.grads[i];
    auto& e = params.entries[i];
    if (gname != e.name || !g.same_shape(e.value)) {
      throw std::invalid_argument("adam_step: gradient \"" + gname +
                                  "\" does not match parameter \"" + e.name + "\"");
    }
    if (!g.all_finite()) {
      throw std::invalid_argument("adam_step: non-finite gradient for \"" + gname + "\"");
    }
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    Tensor& w = params.entries[i].value;
    const Tensor& g = grads.grads[i].second;
    Tensor& m = state.m[i].second;
    Tensor& v = state.v[i].second;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      w[j] = static_cast<float>(w[j] - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
  params.revision += 1;
}

}  // namespace ddpolab::nn
