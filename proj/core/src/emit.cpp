#include "ddpolab/emit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ddpolab {

using nn::Tensor;

namespace {

void write_pgm(const std::string& path, const std::vector<unsigned char>& pixels, int w, int h) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

unsigned char to_byte(float v) {
  const float c = std::min(1.0f, std::max(0.0f, v));
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

}  // namespace

void emit_grid(const std::vector<Tensor>& images, const std::string& path) {
  if (images.empty()) throw std::invalid_argument("emit_grid: no images");
  const auto& shape = images[0].shape();
  if (shape.size() != 3 || shape[0] != 1) {
    throw std::invalid_argument("emit_grid: images must be 1xHxW");
  }
  for (const Tensor& img : images) {
    if (img.shape() != shape) throw std::invalid_argument("emit_grid: mixed image shapes");
  }
  const int h = shape[1];
  const int w = shape[2];
  const int n = static_cast<int>(images.size());
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  const int rows = (n + cols - 1) / cols;
  const int grid_w = cols * w + (cols - 1);
  const int grid_h = rows * h + (rows - 1);

  std::vector<unsigned char> pixels(static_cast<std::size_t>(grid_w) * grid_h, 255);
  for (int i = 0; i < n; ++i) {
    const int r0 = (i / cols) * (h + 1);
    const int c0 = (i % cols) * (w + 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        pixels[static_cast<std::size_t>(r0 + y) * grid_w + c0 + x] =
            to_byte(images[i][static_cast<std::size_t>(y) * w + x]);
      }
    }
  }
  write_pgm(path, pixels, grid_w, grid_h);
}

void emit_curves(const std::vector<DdpoEpochStats>& history, const std::string& base) {
  if (history.empty()) throw std::invalid_argument("emit_curves: empty history");
  write_history_csv(base + ".csv", history);

  const int w = 320, h = 200, margin = 16;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(w) * h, 255);

  for (int x = margin; x < w - margin; ++x) {
    pixels[static_cast<std::size_t>(h - margin) * w + x] = 160;
  }
  for (int y = margin; y <= h - margin; ++y) {
    pixels[static_cast<std::size_t>(y) * w + margin] = 160;
  }

  double lo = history[0].mean_reward, hi = lo;
  for (const DdpoEpochStats& row : history) {
    lo = std::min(lo, row.mean_reward);
    hi = std::max(hi, row.mean_reward);
  }
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }

  const int n = static_cast<int>(history.size());
  auto px = [&](int i) {
    if (n == 1) return w / 2;
    return margin + static_cast<int>(std::lround((w - 2.0 * margin) * i / (n - 1)));
  };
  auto py = [&](double v) {
    const double f = (v - lo) / (hi - lo);
    return (h - margin) - static_cast<int>(std::lround((h - 2.0 * margin) * f));
  };
  auto plot = [&](int x, int y) {
    if (x >= 0 && x < w && y >= 0 && y < h) {
      pixels[static_cast<std::size_t>(y) * w + x] = 0;
    }
  };

  plot(px(0), py(history[0].mean_reward));
  for (int i = 1; i < n; ++i) {
    const int x0 = px(i - 1), y0 = py(history[i - 1].mean_reward);
    const int x1 = px(i), y1 = py(history[i].mean_reward);
    const int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
    for (int s = 0; s <= steps; ++s) {
      const double f = steps == 0 ? 0.0 : static_cast<double>(s) / steps;
      plot(x0 + static_cast<int>(std::lround(f * (x1 - x0))),
           y0 + static_cast<int>(std::lround(f * (y1 - y0))));
    }
  }
  write_pgm(base + ".pgm", pixels, w, h);
}

}  // namespace ddpolab
