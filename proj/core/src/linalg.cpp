#include "usflab/linalg.hpp"

#include <cmath>

namespace usflab {

Tensor triangular_solve(const Tensor& T, const Tensor& rhs, bool lower, bool unit_diag) {
    const std::size_t n = T.rows();
    if (T.cols() != n) throw ContractError("triangular_solve: matrix must be square");
    if (rhs.size() != n) throw ContractError("triangular_solve: rhs dimension mismatch");

    Tensor y({n});
    if (lower) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = rhs[i];
            for (std::size_t j = 0; j < i; ++j) s -= T.at(i, j) * y[j];
            if (unit_diag) {
                y[i] = s;
            } else {
                const double d = T.at(i, i);
                if (std::abs(d) < 1e-300) throw SingularError("triangular_solve: zero diagonal");
                y[i] = s / d;
            }
        }
    } else {
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = n - 1 - k;
            double s = rhs[i];
            for (std::size_t j = i + 1; j < n; ++j) s -= T.at(i, j) * y[j];
            if (unit_diag) {
                y[i] = s;
            } else {
                const double d = T.at(i, i);
                if (std::abs(d) < 1e-300) throw SingularError("triangular_solve: zero diagonal");
                y[i] = s / d;
            }
        }
    }
    return y;
}

Tensor cholesky(const Tensor& A) {
    const std::size_t n = A.rows();
    if (A.cols() != n) throw ContractError("cholesky: matrix must be square");
    Tensor L({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = A.at(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= L.at(i, k) * L.at(j, k);
            if (i == j) {
                if (s <= 0.0 || !std::isfinite(s)) {
                    throw SingularError("cholesky: matrix is not positive definite");
                }
                L.at(i, i) = std::sqrt(s);
            } else {
                L.at(i, j) = s / L.at(j, j);
            }
        }
    }
    return L;
}

Tensor transpose(const Tensor& A) {
    Tensor B({A.cols(), A.rows()});
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) B.at(j, i) = A.at(i, j);
    return B;
}

Tensor matvec(const Tensor& A, const Tensor& x) {
    if (A.cols() != x.size()) throw ContractError("matvec: dimension mismatch");
    Tensor y({A.rows()});
    for (std::size_t i = 0; i < A.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < A.cols(); ++j) s += A.at(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

Tensor matmul(const Tensor& A, const Tensor& B) {
    if (A.cols() != B.rows()) throw ContractError("matmul: dimension mismatch");
    Tensor C({A.rows(), B.cols()});
    for (std::size_t i = 0; i < A.rows(); ++i) {
        for (std::size_t k = 0; k < A.cols(); ++k) {
            const double a = A.at(i, k);
            if (a == 0.0) continue;
            for (std::size_t j = 0; j < B.cols(); ++j) C.at(i, j) += a * B.at(k, j);
        }
    }
    return C;
}

} // namespace usflab
