#include "ddpolab/render.hpp"

#include <cmath>
#include <stdexcept>

#include "ddpolab/rng.hpp"

namespace ddpolab {

using nn::Tensor;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr float kBackground = 0.75f;

float& px(Tensor& img, int y, int x) { return img.at3(0, y, x); }

// coverage-weighted blend toward a feature intensity
void blend(Tensor& img, int y, int x, double cov, float value) {
  if (cov <= 0.0) return;
  const double c = std::min(1.0, cov);
  float& p = px(img, y, x);
  p = static_cast<float>((1.0 - c) * p + c * value);
}

// Lesion: radial profile r(theta) around a jittered center. NV keeps the
// harmonics tiny (an ellipse with <=5% jitter); MEL mixes strong asymmetric
// harmonics (>=25% boundary perturbation). Draw counts are identical for
// both diseases so the stream stays aligned.
void draw_lesion(Tensor& img, Rng& rng, bool mel) {
  const double cx = 7.5 + rng.uniform(-1.2, 1.2);
  const double cy = 7.5 + rng.uniform(-1.2, 1.2);
  const double r0 = rng.uniform(3.6, 4.6);
  const double axis_ratio = rng.uniform(0.78, 0.95);
  const double tilt = rng.uniform(0.0, kPi);
  const float shade = static_cast<float>(rng.uniform(0.26, 0.34));

  // five harmonics drawn unconditionally
  double amp[5], phase[5];
  for (int k = 0; k < 5; ++k) {
    amp[k] = rng.uniform(0.5, 1.0);
    phase[k] = rng.uniform(0.0, 2.0 * kPi);
  }
  // NV: two low harmonics, total <= 5%. MEL: all five, total ~ 40%.
  double scale[5];
  if (mel) {
    scale[0] = 0.10;
    scale[1] = 0.12;
    scale[2] = 0.12;
    scale[3] = 0.08;
    scale[4] = 0.06;
  } else {
    scale[0] = 0.025;
    scale[1] = 0.02;
    scale[2] = 0.0;
    scale[3] = 0.0;
    scale[4] = 0.0;
  }

  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double d = std::sqrt(dx * dx + dy * dy);
      const double theta = std::atan2(dy, dx);
      // ellipse base radius in direction theta
      const double u = std::cos(theta - tilt), v = std::sin(theta - tilt) / axis_ratio;
      double r = r0 / std::sqrt(u * u + v * v);
      double jitter = 0.0;
      for (int k = 0; k < 5; ++k) {
        jitter += scale[k] * amp[k] * std::cos((k + 1) * theta + phase[k]);
      }
      r *= 1.0 + jitter;
      blend(img, y, x, 0.5 + (r - d), shade);
    }
  }
}

void draw_hairs(Tensor& img, Rng& rng) {
  const int n = static_cast<int>(rng.uniform_int(3, 6));
  for (int i = 0; i < n; ++i) {
    // endpoints on opposite borders, orientation alternates with a draw
    const bool vertical = rng.next_u64() & 1;
    double x0, y0, x1, y1;
    if (vertical) {
      x0 = rng.uniform(0.0, 15.0);
      x1 = rng.uniform(0.0, 15.0);
      y0 = 0.0;
      y1 = 15.0;
    } else {
      y0 = rng.uniform(0.0, 15.0);
      y1 = rng.uniform(0.0, 15.0);
      x0 = 0.0;
      x1 = 15.0;
    }
    const float shade = static_cast<float>(rng.uniform(0.10, 0.18));
    const double len2 = (x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0);
    for (int y = 0; y < kImageSize; ++y) {
      for (int x = 0; x < kImageSize; ++x) {
        const double t = ((x - x0) * (x1 - x0) + (y - y0) * (y1 - y0)) / len2;
        const double tc = std::min(1.0, std::max(0.0, t));
        const double px_ = x0 + tc * (x1 - x0), py_ = y0 + tc * (y1 - y0);
        const double d = std::hypot(x - px_, y - py_);
        blend(img, y, x, 1.1 - d * 1.4, shade);
      }
    }
  }
}

void draw_gel(Tensor& img, Rng& rng) {
  const int n = static_cast<int>(rng.uniform_int(2, 5));
  for (int i = 0; i < n; ++i) {
    const double cx = rng.uniform(2.0, 13.0);
    const double cy = rng.uniform(2.0, 13.0);
    const double r = rng.uniform(1.0, 2.0);
    for (int y = 0; y < kImageSize; ++y) {
      for (int x = 0; x < kImageSize; ++x) {
        const double d = std::hypot(x - cx, y - cy);
        blend(img, y, x, 0.5 + (r - d), 0.96f);
      }
    }
  }
}

void draw_ink(Tensor& img, Rng& rng) {
  const int corner = static_cast<int>(rng.uniform_int(0, 3));
  const double cx = (corner & 1) ? 15.0 : 0.0;
  const double cy = (corner & 2) ? 15.0 : 0.0;
  const double r = rng.uniform(2.8, 4.2);
  const double wobble = rng.uniform(0.0, 2.0 * kPi);
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      const double theta = std::atan2(y - cy, x - cx);
      const double rr = r * (1.0 + 0.15 * std::cos(3.0 * theta + wobble));
      blend(img, y, x, 0.5 + (rr - d), 0.05f);
    }
  }
}

void draw_ruler(Tensor& img, Rng& rng) {
  const int edge = static_cast<int>(rng.uniform_int(0, 3));
  const int n = static_cast<int>(rng.uniform_int(5, 7));
  const double spacing = 16.0 / n;
  const double offset = rng.uniform(0.0, spacing);
  const int depth = static_cast<int>(rng.uniform_int(2, 3));
  for (int i = 0; i < n; ++i) {
    const int pos = static_cast<int>(offset + i * spacing);
    if (pos < 0 || pos >= kImageSize) continue;
    for (int d = 0; d < depth; ++d) {
      int x, y;
      switch (edge) {
        case 0: x = pos, y = d; break;              // top
        case 1: x = pos, y = kImageSize - 1 - d; break;  // bottom
        case 2: x = d, y = pos; break;              // left
        default: x = kImageSize - 1 - d, y = pos; break;  // right
      }
      blend(img, y, x, 1.0, 0.15f);
    }
  }
}

}  // namespace

ImageSample render_sample(std::uint64_t seed, const AttributeVector& attrs) {
  if (!attrs.valid()) {
    throw std::invalid_argument("render_sample: invalid attribute encoding");
  }

  Tensor img = Tensor::full({1, kImageSize, kImageSize}, kBackground);

  Rng lesion_rng(stage_seed(seed, "render/lesion"));
  draw_lesion(img, lesion_rng, attrs.is_mel());

  if (attrs.artifact(0)) {
    Rng r(stage_seed(seed, "render/hair"));
    draw_hairs(img, r);
  }
  if (attrs.artifact(1)) {
    Rng r(stage_seed(seed, "render/gel"));
    draw_gel(img, r);
  }
  if (attrs.artifact(2)) {
    Rng r(stage_seed(seed, "render/ink"));
    draw_ink(img, r);
  }
  if (attrs.artifact(3)) {
    Rng r(stage_seed(seed, "render/ruler"));
    draw_ruler(img, r);
  }

  Rng noise_rng(stage_seed(seed, "render/noise"));
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = img[i] + 0.02 * noise_rng.normal();
    img[i] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
  }

  return {std::move(img), attrs, seed};
}

}  // namespace ddpolab
