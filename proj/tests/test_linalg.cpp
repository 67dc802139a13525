#include <doctest.h>

#include <cmath>

#include "usflab/linalg.hpp"
#include "usflab/rng.hpp"

using namespace usflab;

TEST_SUITE("linalg") {

TEST_CASE("lower triangular solve against hand substitution") {
    // [2 0 0; 1 3 0; -1 2 4] y = (2, 7, 9) -> y = (1, 2, 1.5)
    Tensor T({3, 3}, {2, 0, 0, 1, 3, 0, -1, 2, 4});
    Tensor rhs = Tensor::of({2, 7, 9});
    Tensor y = triangular_solve(T, rhs, /*lower=*/true, /*unit_diag=*/false);
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(y[2] == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("upper triangular solve against hand substitution") {
    // [2 1; 0 4] y = (4, 8) -> y = (1, 2)
    Tensor T({2, 2}, {2, 1, 0, 4});
    Tensor y = triangular_solve(T, Tensor::of({4, 8}), false, false);
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("unit diagonal ignores stored diagonal") {
    Tensor T({2, 2}, {99, 0, 3, 99});
    Tensor y = triangular_solve(T, Tensor::of({1, 5}), true, true);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(2.0));
}

TEST_CASE("singular pivot throws") {
    Tensor T({2, 2}, {1, 0, 1, 0});
    CHECK_THROWS_AS(triangular_solve(T, Tensor::of({1, 1}), true, false), SingularError);
}

TEST_CASE("cholesky of a known matrix") {
    // [[4,2],[2,3]] = L L^T with L = [[2,0],[1,sqrt(2)]]
    Tensor A({2, 2}, {4, 2, 2, 3});
    Tensor L = cholesky(A);
    CHECK(L.at(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(L.at(1, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(L.at(1, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK(L.at(0, 1) == 0.0);
}

TEST_CASE("cholesky reconstructs random SPD matrices") {
    RngStream stream(13);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t d = 2 + stream.uniform_index(4);
        Tensor B = stream.normal_tensor({d, d});
        Tensor A = matmul(B, transpose(B));
        for (std::size_t i = 0; i < d; ++i) A.at(i, i) += 0.5;
        Tensor L = cholesky(A);
        Tensor back = matmul(L, transpose(L));
        for (std::size_t i = 0; i < A.size(); ++i) {
            CHECK(back[i] == doctest::Approx(A[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("cholesky rejects indefinite input") {
    Tensor A({2, 2}, {1, 2, 2, 1});
    CHECK_THROWS_AS(cholesky(A), SingularError);
}

TEST_CASE("matmul and matvec against hand values") {
    Tensor A({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor B({3, 2}, {7, 8, 9, 10, 11, 12});
    Tensor C = matmul(A, B);
    CHECK(C.at(0, 0) == 58.0);
    CHECK(C.at(0, 1) == 64.0);
    CHECK(C.at(1, 0) == 139.0);
    CHECK(C.at(1, 1) == 154.0);

    Tensor v = matvec(A, Tensor::of({1, 0, -1}));
    CHECK(v[0] == -2.0);
    CHECK(v[1] == -2.0);
}

TEST_CASE("transpose") {
    Tensor A({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor T = transpose(A);
    CHECK(T.rows() == 3);
    CHECK(T.at(2, 1) == 6.0);
}

} // TEST_SUITE
