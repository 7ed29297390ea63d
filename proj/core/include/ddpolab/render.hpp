#pragma once

#include <cstdint>

#include "ddpolab/attributes.hpp"
#include "ddpolab/tensor.hpp"

namespace ddpolab {

inline constexpr int kImageSize = 16;

struct ImageSample {
  nn::Tensor image;  // {1,16,16}, values in [0,1]
  AttributeVector label;
  std::uint64_t seed = 0;
};

// Deterministic procedural 16x16 render. Visual codes: NV is a smooth
// filled ellipse, MEL an asymmetric radially perturbed blob; hairs are dark
// streaks, gel bubbles bright circles, ink a dark corner blob, ruler a row
// of edge ticks. Each feature draws from its own seed-derived stream, so
// toggling one artifact bit leaves every other feature's pixels unchanged.
// Gaussian pixel noise (sigma 0.02) is added last, then values are clamped
// to [0,1].
ImageSample render_sample(std::uint64_t seed, const AttributeVector& attrs);

}  // namespace ddpolab
