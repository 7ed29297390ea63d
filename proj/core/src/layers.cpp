#include "ddpolab/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace ddpolab::nn {

namespace {

void check_chw(const Tensor& x, const char* what) {
  if (x.rank() != 3) {
    throw std::invalid_argument(std::string(what) + ": expected {C,H,W}, got " + x.shape_str());
  }
}

}  // namespace

Tensor conv3x3(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_chw(x, "conv3x3");
  const int cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  if (w.rank() != 4 || w.extent(1) != cin || w.extent(2) != 3 || w.extent(3) != 3) {
    throw std::invalid_argument("conv3x3: weight shape " + w.shape_str() +
                                " does not match input " + x.shape_str());
  }
  const int cout = w.extent(0);
  if (b.rank() != 1 || b.extent(0) != cout) {
    throw std::invalid_argument("conv3x3: bias shape " + b.shape_str());
  }
  Tensor y({cout, h, wd});
  const std::size_t plane = static_cast<std::size_t>(h) * wd;
  // Tap-major: for each tap the valid output window is a rectangle, so the
  // inner loop is contiguous and branch free. Each output pixel accumulates
  // taps in fixed (c, dy, dx) order.
  for (int o = 0; o < cout; ++o) {
    float* yo = y.data().data() + static_cast<std::size_t>(o) * plane;
    for (std::size_t p = 0; p < plane; ++p) yo[p] = b[o];
    for (int c = 0; c < cin; ++c) {
      const float* xc = x.data().data() + static_cast<std::size_t>(c) * plane;
      const float* wo = w.data().data() + (static_cast<std::size_t>(o) * cin + c) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        const int i0 = dy < 0 ? 1 : 0;
        const int i1 = dy > 0 ? h - 1 : h;
        for (int dx = -1; dx <= 1; ++dx) {
          const float wk = wo[(dy + 1) * 3 + (dx + 1)];
          const int j0 = dx < 0 ? 1 : 0;
          const int j1 = dx > 0 ? wd - 1 : wd;
          for (int i = i0; i < i1; ++i) {
            float* yrow = yo + static_cast<std::size_t>(i) * wd;
            const float* xrow = xc + static_cast<std::size_t>(i + dy) * wd + dx;
            for (int j = j0; j < j1; ++j) yrow[j] += wk * xrow[j];
          }
        }
      }
    }
  }
  return y;
}

void conv3x3_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                      Tensor& gx, Tensor& gw, Tensor& gb) {
  const int cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  const int cout = w.extent(0);
  const std::size_t plane = static_cast<std::size_t>(h) * wd;
  for (int o = 0; o < cout; ++o) {
    const float* go = gy.data().data() + static_cast<std::size_t>(o) * plane;
    double accb = 0.0;
    for (std::size_t p = 0; p < plane; ++p) accb += go[p];
    gb[o] += static_cast<float>(accb);
    for (int c = 0; c < cin; ++c) {
      const float* xc = x.data().data() + static_cast<std::size_t>(c) * plane;
      float* gxc = gx.data().data() + static_cast<std::size_t>(c) * plane;
      const std::size_t wbase = (static_cast<std::size_t>(o) * cin + c) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        const int i0 = dy < 0 ? 1 : 0;
        const int i1 = dy > 0 ? h - 1 : h;
        for (int dx = -1; dx <= 1; ++dx) {
          const std::size_t wi = wbase + (dy + 1) * 3 + (dx + 1);
          const float wk = w[wi];
          const int j0 = dx < 0 ? 1 : 0;
          const int j1 = dx > 0 ? wd - 1 : wd;
          float accw = 0.0f;
          for (int i = i0; i < i1; ++i) {
            const float* grow = go + static_cast<std::size_t>(i) * wd;
            const float* xrow = xc + static_cast<std::size_t>(i + dy) * wd + dx;
            float* gxrow = gxc + static_cast<std::size_t>(i + dy) * wd + dx;
            for (int j = j0; j < j1; ++j) {
              gxrow[j] += wk * grow[j];
              accw += xrow[j] * grow[j];
            }
          }
          gw[wi] += accw;
        }
      }
    }
  }
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || x.rank() != 1 || w.extent(1) != x.extent(0)) {
    throw std::invalid_argument("affine: shape mismatch " + w.shape_str() + " * " + x.shape_str());
  }
  const int m = w.extent(0), n = w.extent(1);
  Tensor y({m});
  for (int i = 0; i < m; ++i) {
    double acc = b[i];
    for (int j = 0; j < n; ++j) acc += static_cast<double>(w[i * n + j]) * x[j];
    y[i] = static_cast<float>(acc);
  }
  return y;
}

void affine_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                     Tensor& gx, Tensor& gw, Tensor& gb) {
  const int m = w.extent(0), n = w.extent(1);
  for (int i = 0; i < m; ++i) {
    const float g = gy[i];
    gb[i] += g;
    for (int j = 0; j < n; ++j) {
      gx[j] += w[i * n + j] * g;
      gw[i * n + j] += x[j] * g;
    }
  }
}

float sigmoid(float z) {
  if (z >= 0.0f) {
    return 1.0f / (1.0f + std::exp(-z));
  }
  const float e = std::exp(z);
  return e / (1.0f + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

Tensor silu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid(x[i]);
  return y;
}

void silu_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float s = sigmoid(x[i]);
    gx[i] += gy[i] * s * (1.0f + x[i] * (1.0f - s));
  }
}

Tensor nearest_down2(const Tensor& x) {
  check_chw(x, "nearest_down2");
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (h % 2 || w % 2) throw std::invalid_argument("nearest_down2: odd extent " + x.shape_str());
  Tensor y({c, h / 2, w / 2});
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < h / 2; ++i)
      for (int j = 0; j < w / 2; ++j) y.at3(k, i, j) = x.at3(k, 2 * i, 2 * j);
  return y;
}

void nearest_down2_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < h / 2; ++i)
      for (int j = 0; j < w / 2; ++j) gx.at3(k, 2 * i, 2 * j) += gy.at3(k, i, j);
}

Tensor nearest_up2(const Tensor& x) {
  check_chw(x, "nearest_up2");
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  Tensor y({c, 2 * h, 2 * w});
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j) y.at3(k, i, j) = x.at3(k, i / 2, j / 2);
  return y;
}

void nearest_up2_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j) gx.at3(k, i / 2, j / 2) += gy.at3(k, i, j);
}

Tensor avgpool2(const Tensor& x) {
  check_chw(x, "avgpool2");
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (h % 2 || w % 2) throw std::invalid_argument("avgpool2: odd extent " + x.shape_str());
  Tensor y({c, h / 2, w / 2});
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < h / 2; ++i)
      for (int j = 0; j < w / 2; ++j)
        y.at3(k, i, j) = 0.25f * (x.at3(k, 2 * i, 2 * j) + x.at3(k, 2 * i, 2 * j + 1) +
                                  x.at3(k, 2 * i + 1, 2 * j) + x.at3(k, 2 * i + 1, 2 * j + 1));
  return y;
}

void avgpool2_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < h / 2; ++i)
      for (int j = 0; j < w / 2; ++j) {
        const float g = 0.25f * gy.at3(k, i, j);
        gx.at3(k, 2 * i, 2 * j) += g;
        gx.at3(k, 2 * i, 2 * j + 1) += g;
        gx.at3(k, 2 * i + 1, 2 * j) += g;
        gx.at3(k, 2 * i + 1, 2 * j + 1) += g;
      }
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

Tensor axpby(double a, const Tensor& x, double b, const Tensor& y) {
  check_same_shape(x, y, "axpby");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<float>(a * static_cast<double>(x[i]) + b * static_cast<double>(y[i]));
  }
  return out;
}

Tensor channel_bias(const Tensor& x, const Tensor& b) {
  check_chw(x, "channel_bias");
  if (b.rank() != 1 || b.extent(0) != x.extent(0)) {
    throw std::invalid_argument("channel_bias: bias " + b.shape_str() + " vs " + x.shape_str());
  }
  Tensor y(x.shape());
  const int c = x.extent(0), hw = x.extent(1) * x.extent(2);
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < hw; ++i) y.data()[k * hw + i] = x.data()[k * hw + i] + b[k];
  return y;
}

void channel_bias_backward(const Tensor& gy, Tensor& gx, Tensor& gb) {
  const int c = gy.extent(0), hw = gy.extent(1) * gy.extent(2);
  for (int k = 0; k < c; ++k) {
    double acc = 0.0;
    for (int i = 0; i < hw; ++i) {
      const float g = gy.data()[k * hw + i];
      gx.data()[k * hw + i] += g;
      acc += g;
    }
    gb[k] += static_cast<float>(acc);
  }
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  if (shape_numel(shape) != x.size()) {
    throw std::invalid_argument("reshape: element count mismatch");
  }
  return Tensor(std::move(shape), x.data());
}

Tensor time_embedding(int t, int dim) {
  if (dim % 2) throw std::invalid_argument("time_embedding: dim must be even");
  Tensor e({dim});
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    e[2 * i] = static_cast<float>(std::sin(t * freq));
    e[2 * i + 1] = static_cast<float>(std::cos(t * freq));
  }
  return e;
}

}  // namespace ddpolab::nn
