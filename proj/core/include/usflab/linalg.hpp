#pragma once

#include "usflab/tensor.hpp"

namespace usflab {

/// Solves T*y = rhs by forward/back substitution. T must be square and
/// triangular in the indicated half; entries outside it are ignored.
/// With unit_diag the diagonal is taken as 1 regardless of storage.
/// Throws SingularError when a pivot is below 1e-300 in magnitude.
Tensor triangular_solve(const Tensor& T, const Tensor& rhs, bool lower, bool unit_diag);

/// Cholesky factor L with A = L*L^T. Throws SingularError if A is not
/// positive definite.
Tensor cholesky(const Tensor& A);

Tensor transpose(const Tensor& A);
Tensor matvec(const Tensor& A, const Tensor& x);
Tensor matmul(const Tensor& A, const Tensor& B);

} // namespace usflab
