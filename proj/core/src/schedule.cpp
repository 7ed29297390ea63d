#include "ddpolab/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ddpolab {

double VarianceSchedule::sigma(int t) const {
  return std::sqrt(std::max(posterior_var[t - 1], 1e-6));
}

void VarianceSchedule::check_step(int t) const {
  if (t < 1 || t > T) {
    throw std::invalid_argument("step index " + std::to_string(t) + " outside 1.." +
                                std::to_string(T));
  }
}

VarianceSchedule make_schedule(int T, double beta_min, double beta_max) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be at least 1");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
    throw std::invalid_argument("make_schedule: need 0 < beta_min <= beta_max < 1");
  }
  VarianceSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  s.posterior_var.resize(T);
  double bar = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
    const double b = beta_min + (beta_max - beta_min) * frac;
    const double prev_bar = bar;
    s.beta[t - 1] = b;
    s.alpha[t - 1] = 1.0 - b;
    bar *= 1.0 - b;
    s.alpha_bar[t - 1] = bar;
    s.posterior_var[t - 1] = b * (1.0 - prev_bar) / (1.0 - bar);
  }
  return s;
}

}  // namespace ddpolab
