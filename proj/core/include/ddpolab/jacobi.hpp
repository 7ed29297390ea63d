#pragma once

#include <vector>

namespace ddpolab {

// Eigendecomposition of a d x d symmetric matrix. Column j of `vectors`
// (row-major) is the unit eigenvector for values[j].
struct JacobiResult {
  std::vector<double> values;
  std::vector<double> vectors;
};

double off_diagonal_norm(const std::vector<double>& a, int d);

// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
// 1e-9. Throws std::invalid_argument if `a` is not square-symmetric and
// std::runtime_error if convergence is not reached.
JacobiResult jacobi_eigen(const std::vector<double>& a, int d);

}  // namespace ddpolab
