#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "ddpolab/params.hpp"
#include "ddpolab/tape.hpp"

namespace ddpolab::nn {

// Records the loss computation for a given parameter snapshot. Must be
// deterministic: any randomness has to be fixed inside the closure.
using RecordFn = std::function<LossRecord(const ModelParams&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_central = 0.0;
  std::size_t coords_checked = 0;
};

// Central-difference check of the analytic gradient against the recorded
// loss. Perturbations are applied in float32 storage and the realized
// (stored) values are used as the difference denominator, so h is not
// itself a rounding-error source. Checks every coordinate when the model
// has at most min_coords of them, otherwise a seeded sample of min_coords.
// Relative error per coordinate: |a - cd| / max(|a|, |cd|, 1e-6).
GradCheckResult grad_check_against(const ModelParams& params, const RecordFn& fn,
                                   const GradSet& analytic, double h,
                                   std::size_t min_coords = 200, std::uint64_t seed = 0);

// Same, with the analytic gradient taken from the record's own backward pass.
GradCheckResult grad_check(const ModelParams& params, const RecordFn& fn, double h,
                           std::size_t min_coords = 200, std::uint64_t seed = 0);

}  // namespace ddpolab::nn
