#pragma once

#include <vector>

namespace ddpolab {

inline constexpr int kDefaultT = 50;
inline constexpr double kDefaultBetaMin = 1e-3;
inline constexpr double kDefaultBetaMax = 0.12;

// Linear beta schedule with derived tables. Vectors are indexed t-1 for
// t in 1..T; alpha_bar_0 is defined as 1, making posterior_var[0] zero.
// sigma() applies the 1e-6 variance floor, so it is at least 1e-3 at every
// step and reverse-step densities stay finite.
struct VarianceSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> posterior_var;

  double beta_at(int t) const { return beta[t - 1]; }
  double alpha_at(int t) const { return alpha[t - 1]; }
  double alpha_bar_at(int t) const { return alpha_bar[t - 1]; }
  double posterior_var_at(int t) const { return posterior_var[t - 1]; }
  double sigma(int t) const;

  void check_step(int t) const;
};

VarianceSchedule make_schedule(int T, double beta_min, double beta_max);

inline VarianceSchedule default_schedule() {
  return make_schedule(kDefaultT, kDefaultBetaMin, kDefaultBetaMax);
}

}  // namespace ddpolab
