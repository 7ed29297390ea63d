#include "ddpolab/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "ddpolab/rng.hpp"

namespace ddpolab::nn {

namespace {

double loss_value(const RecordFn& fn, const ModelParams& params) {
  LossRecord rec = fn(params);
  if (!std::isfinite(rec.value)) {
    throw std::runtime_error("grad_check: non-finite loss");
  }
  return rec.value;
}

}  // namespace

GradCheckResult grad_check_against(const ModelParams& params, const RecordFn& fn,
                                   const GradSet& analytic, double h,
                                   std::size_t min_coords, std::uint64_t seed) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: h must be positive");
  if (analytic.grads.size() != params.entries.size()) {
    throw std::invalid_argument("grad_check: gradient/parameter count mismatch");
  }

  // flat coordinate space over all parameters
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.entries.size(); ++p) {
    for (std::size_t j = 0; j < params.entries[p].value.size(); ++j) {
      coords.emplace_back(p, j);
    }
  }
  if (coords.size() > min_coords) {
    Rng rng(stage_seed(seed, "gradcheck"));
    for (std::size_t i = 0; i < min_coords; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(coords.size() - 1 - i)));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(min_coords);
  }

  ModelParams work = params;
  GradCheckResult res;
  res.coords_checked = coords.size();
  for (const auto& [p, j] : coords) {
    Tensor& t = work.entries[p].value;
    const float orig = t[j];
    t[j] = static_cast<float>(static_cast<double>(orig) + h);
    const double wp = t[j];
    const double lp = loss_value(fn, work);
    t[j] = static_cast<float>(static_cast<double>(orig) - h);
    const double wm = t[j];
    const double lm = loss_value(fn, work);
    t[j] = orig;

    if (wp == wm) {
      throw std::runtime_error("grad_check: step h vanished in float32 at \"" +
                               params.entries[p].name + "\"[" + std::to_string(j) + "]");
    }
    const double cd = (lp - lm) / (wp - wm);
    const double a = analytic.grads[p].second[j];
    const double rel = std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-6});
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_param = params.entries[p].name;
      res.worst_coord = j;
      res.worst_analytic = a;
      res.worst_central = cd;
    }
  }
  return res;
}

GradCheckResult grad_check(const ModelParams& params, const RecordFn& fn, double h,
                           std::size_t min_coords, std::uint64_t seed) {
  LossRecord rec = fn(params);
  if (!std::isfinite(rec.value)) {
    throw std::runtime_error("grad_check: non-finite loss");
  }
  GradSet gs = backward(rec);
  return grad_check_against(params, fn, gs, h, min_coords, seed);
}

}  // namespace ddpolab::nn
