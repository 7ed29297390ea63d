#include "ddpolab/jacobi.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ddpolab {

namespace {

constexpr double kOffTol = 1e-9;
constexpr int kMaxSweeps = 100;

}  // namespace

double off_diagonal_norm(const std::vector<double>& a, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (i != j) s += a[i * d + j] * a[i * d + j];
    }
  }
  return std::sqrt(s);
}

JacobiResult jacobi_eigen(const std::vector<double>& a, int d) {
  if (d < 1 || a.size() != static_cast<std::size_t>(d) * d) {
    throw std::invalid_argument("jacobi_eigen: matrix is not " + std::to_string(d) + "x" +
                                std::to_string(d));
  }
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      if (std::fabs(a[i * d + j] - a[j * d + i]) > 1e-8) {
        throw std::invalid_argument("jacobi_eigen: matrix is not symmetric");
      }
    }
  }

  std::vector<double> m = a;
  // exact symmetrization so rotations preserve symmetry bit for bit
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const double avg = 0.5 * (m[i * d + j] + m[j * d + i]);
      m[i * d + j] = avg;
      m[j * d + i] = avg;
    }
  }

  std::vector<double> v(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) v[i * d + i] = 1.0;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    if (off_diagonal_norm(m, d) < kOffTol) {
      JacobiResult out;
      out.values.resize(d);
      for (int i = 0; i < d; ++i) out.values[i] = m[i * d + i];
      out.vectors = std::move(v);
      return out;
    }
    for (int p = 0; p < d - 1; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = m[p * d + q];
        if (apq == 0.0) continue;
        const double diff = m[q * d + q] - m[p * d + p];
        double t;
        if (diff == 0.0) {
          t = 1.0;
        } else {
          const double theta = diff / (2.0 * apq);
          t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        const double app = m[p * d + p];
        const double aqq = m[q * d + q];
        m[p * d + p] = app - t * apq;
        m[q * d + q] = aqq + t * apq;
        m[p * d + q] = 0.0;
        m[q * d + p] = 0.0;
        for (int k = 0; k < d; ++k) {
          if (k == p || k == q) continue;
          const double akp = m[k * d + p];
          const double akq = m[k * d + q];
          m[k * d + p] = c * akp - s * akq;
          m[p * d + k] = m[k * d + p];
          m[k * d + q] = s * akp + c * akq;
          m[q * d + k] = m[k * d + q];
        }
        for (int k = 0; k < d; ++k) {
          const double vkp = v[k * d + p];
          const double vkq = v[k * d + q];
          v[k * d + p] = c * vkp - s * vkq;
          v[k * d + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  throw std::runtime_error("jacobi_eigen: no convergence after " + std::to_string(kMaxSweeps) +
                           " sweeps");
}

}  // namespace ddpolab
