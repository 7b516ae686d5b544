#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "filet/dense.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

using filet::Index;
using filet::Matrix;
using filet::Vector;

namespace {

Matrix random_matrix(Index rows, Index cols, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

// Oracle: naive triple loop, no library product involved.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
    Matrix c = Matrix::Zero(a.rows(), b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < b.cols(); ++j)
            for (Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
    return c;
}

// Oracle: elementwise block formula for the Kronecker product.
Matrix kron_oracle(const Matrix& a, const Matrix& b) {
    Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            for (Index p = 0; p < b.rows(); ++p)
                for (Index q = 0; q < b.cols(); ++q)
                    k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
    return k;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("matmul identity and forced cases") {
    Matrix i2 = Matrix::Identity(2, 2);
    Matrix m(2, 2);
    m << 1, 2, 3, 4;
    CHECK(max_abs_diff(filet::matmul(i2, m), m) == 0.0);

    Matrix d(2, 2), p(2, 2), want(2, 2);
    d << 1, 0, 0, 2;
    p << 0, 1, 1, 0;
    want << 0, 1, 2, 0;
    CHECK(max_abs_diff(filet::matmul(d, p), want) == 0.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Matrix a = random_matrix(5, 4, 101);
    Matrix b = random_matrix(4, 3, 102);
    CHECK(max_abs_diff(filet::matmul(a, b), matmul_oracle(a, b)) <= 1e-12);
}

TEST_CASE("matmul rejects shape mismatch with a shape report") {
    Matrix a = random_matrix(3, 4, 1);
    Matrix b = random_matrix(5, 2, 2);
    CHECK_THROWS_WITH_AS(filet::matmul(a, b),
                         doctest::Contains("3x4"), std::invalid_argument);
}

TEST_CASE("matmul associativity on seeded triples") {
    for (unsigned seed = 0; seed < 10; ++seed) {
        Matrix a = random_matrix(4, 5, 300 + seed);
        Matrix b = random_matrix(5, 3, 400 + seed);
        Matrix c = random_matrix(3, 6, 500 + seed);
        Matrix left = filet::matmul(filet::matmul(a, b), c);
        Matrix right = filet::matmul(a, filet::matmul(b, c));
        double scale = a.cwiseAbs().maxCoeff() * b.cwiseAbs().maxCoeff() * c.cwiseAbs().maxCoeff();
        CHECK(max_abs_diff(left, right) <= 1e-9 * scale);
    }
}

TEST_CASE("gram diagonal and identity cases") {
    Matrix w(2, 2);
    w << 1, 0, 0, 2;
    Matrix want(2, 2);
    want << 1, 0, 0, 4;
    CHECK(max_abs_diff(filet::gram(w), want) == 0.0);
    Matrix i3 = Matrix::Identity(3, 3);
    CHECK(max_abs_diff(filet::gram(i3), i3) == 0.0);
}

TEST_CASE("gram matches matmul oracle, is symmetric and PSD") {
    Matrix w = random_matrix(4, 3, 77);
    Matrix g = filet::gram(w);
    Matrix wt = w.transpose();
    CHECK(max_abs_diff(g, matmul_oracle(wt, w)) <= 1e-12);
    CHECK(max_abs_diff(g, g.transpose()) <= 1e-12);
    // PSD via singular values of w: eigenvalues of gram are sigma squared.
    filet::SvdResult s = filet::svd(w);
    double min_eig = s.sigma.size() < g.rows() ? 0.0 : s.sigma.minCoeff() * s.sigma.minCoeff();
    CHECK(min_eig >= -1e-9);
}

TEST_CASE("normalize_columns flags zero columns and unit-normalizes the rest") {
    Matrix m(2, 2);
    m << 3, 0, 4, 0;
    auto nc = filet::normalize_columns(m);
    CHECK(nc.matrix(0, 0) == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(nc.matrix(1, 0) == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(nc.matrix(0, 1) == 0.0);
    CHECK(nc.zero_mask == std::vector<bool>{false, true});

    Matrix i2 = Matrix::Identity(2, 2);
    auto id = filet::normalize_columns(i2);
    CHECK(max_abs_diff(id.matrix, i2) == 0.0);
    CHECK(id.zero_mask == std::vector<bool>{false, false});

    Matrix r = random_matrix(6, 6, 99);
    auto nr = filet::normalize_columns(r);
    for (Index j = 0; j < 6; ++j) {
        CHECK_FALSE(nr.zero_mask[static_cast<size_t>(j)]);
        double norm = 0.0;
        for (Index i = 0; i < 6; ++i) norm += nr.matrix(i, j) * nr.matrix(i, j);
        CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-12);
    }
}

TEST_CASE("svd diagonal and permutation cases") {
    Matrix d(2, 2);
    d << 3, 0, 0, 1;
    filet::SvdResult s = filet::svd(d);
    CHECK(s.sigma(0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(s.sigma(1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(max_abs_diff(s.u.cwiseAbs(), Matrix::Identity(2, 2)) <= 1e-12);
    CHECK(max_abs_diff(s.v.cwiseAbs(), Matrix::Identity(2, 2)) <= 1e-12);

    Matrix p(2, 2);
    p << 0, 2, 2, 0;
    filet::SvdResult sp = filet::svd(p);
    CHECK(sp.sigma(0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(sp.sigma(1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("svd reconstruction on a seeded 5x3 matrix") {
    Matrix m = random_matrix(5, 3, 2024);
    filet::SvdResult s = filet::svd(m);
    Matrix sigma = Matrix::Zero(5, 3);
    for (Index i = 0; i < 3; ++i) sigma(i, i) = s.sigma(i);
    Matrix rec = s.u * sigma * s.v.transpose();
    CHECK((rec - m).norm() <= 1e-8);
}

TEST_CASE("svd invariants over 100+ seeded shapes") {
    std::mt19937_64 shape_rng(7);
    std::uniform_int_distribution<Index> dim(1, 16);
    for (unsigned trial = 0; trial < 120; ++trial) {
        Index rows = dim(shape_rng);
        Index cols = dim(shape_rng);
        Matrix m = random_matrix(rows, cols, 9000 + trial);
        filet::SvdResult s = filet::svd(m);

        Matrix utu = s.u.transpose() * s.u;
        Matrix vtv = s.v.transpose() * s.v;
        CHECK(max_abs_diff(utu, Matrix::Identity(rows, rows)) <= 1e-9);
        CHECK(max_abs_diff(vtv, Matrix::Identity(cols, cols)) <= 1e-9);

        Matrix sigma = Matrix::Zero(rows, cols);
        for (Index i = 0; i < s.sigma.size(); ++i) sigma(i, i) = s.sigma(i);
        Matrix rec = s.u * sigma * s.v.transpose();
        CHECK((rec - m).norm() <= 1e-8 * (1.0 + m.norm()));

        for (Index i = 0; i + 1 < s.sigma.size(); ++i) CHECK(s.sigma(i) >= s.sigma(i + 1));
        CHECK(s.sigma.minCoeff() >= 0.0);

        // Sign convention plus the same input must give bitwise-equal output.
        filet::SvdResult again = filet::svd(m);
        CHECK(max_abs_diff(s.u, again.u) == 0.0);
        CHECK(max_abs_diff(s.v, again.v) == 0.0);
        CHECK((s.sigma - again.sigma).cwiseAbs().maxCoeff() == 0.0);
        for (Index j = 0; j < s.u.cols(); ++j) {
            Index arg = 0;
            s.u.col(j).cwiseAbs().maxCoeff(&arg);
            CHECK(s.u(arg, j) >= 0.0);
        }
    }
}

TEST_CASE("svd rejects empty input") {
    Matrix empty(0, 3);
    CHECK_THROWS_AS(filet::svd(empty), std::invalid_argument);
}

TEST_CASE("kron identity, scalar, and block-oracle cases") {
    Matrix i2 = Matrix::Identity(2, 2);
    CHECK(max_abs_diff(filet::kron(i2, i2), Matrix::Identity(4, 4)) == 0.0);

    Matrix s(1, 1);
    s << 2;
    Matrix d(2, 2);
    d << 1, 0, 0, 3;
    Matrix want(2, 2);
    want << 2, 0, 0, 6;
    CHECK(max_abs_diff(filet::kron(s, d), want) == 0.0);

    Matrix a = random_matrix(3, 3, 11);
    Matrix b = random_matrix(2, 2, 12);
    CHECK(max_abs_diff(filet::kron(a, b), kron_oracle(a, b)) == 0.0);
}

TEST_CASE("kron mixed-product property") {
    Matrix a = random_matrix(2, 3, 21);
    Matrix b = random_matrix(3, 2, 22);
    Matrix c = random_matrix(3, 2, 23);
    Matrix d = random_matrix(2, 4, 24);
    Matrix lhs = filet::matmul(filet::kron(a, b), filet::kron(c, d));
    Matrix rhs = filet::kron(filet::matmul(a, c), filet::matmul(b, d));
    CHECK(max_abs_diff(lhs, rhs) <= 1e-9);
}

TEST_CASE("kron rejects oversized results") {
    Matrix big = Matrix::Ones(1000, 1000);
    Matrix one = Matrix::Ones(1, 1);
    CHECK_THROWS_AS(filet::kron(big, Matrix::Ones(2, 2)), std::invalid_argument);
    CHECK_NOTHROW(filet::kron(big, one));
}

TEST_CASE("topk_min forced and tie cases") {
    Vector v(3);
    v << 3, 1, 2;
    CHECK(filet::topk_min(v, 2) == std::vector<Index>{1, 2});
    Vector ties(3);
    ties << 5, 5, 5;
    CHECK(filet::topk_min(ties, 2) == std::vector<Index>{0, 1});
    CHECK_THROWS_AS(filet::topk_min(v, 4), std::invalid_argument);
}

TEST_CASE("topk_min matches full-sort oracle on a seeded 100-vector") {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    Vector v(100);
    for (Index i = 0; i < 100; ++i) v(i) = dist(rng);
    // A few duplicates so the tie rule is exercised.
    v(17) = v(3);
    v(88) = v(3);

    std::vector<Index> all(100);
    std::iota(all.begin(), all.end(), Index{0});
    std::stable_sort(all.begin(), all.end(), [&](Index a, Index b) {
        if (v(a) != v(b)) return v(a) < v(b);
        return a < b;
    });
    all.resize(10);
    CHECK(filet::topk_min(v, 10) == all);

    // Determinism across repeated calls.
    CHECK(filet::topk_min(v, 10) == filet::topk_min(v, 10));
}

TEST_CASE("outer basis and forced cases") {
    Vector e1(2);
    e1 << 1, 0;
    Matrix want(2, 2);
    want << 1, 0, 0, 0;
    CHECK(max_abs_diff(filet::outer(e1, e1), want) == 0.0);

    Vector u(2), v(2);
    u << 1, 2;
    v << 3, 4;
    Matrix w2(2, 2);
    w2 << 3, 4, 6, 8;
    CHECK(max_abs_diff(filet::outer(u, v), w2) == 0.0);
}

TEST_CASE("outer of unit vectors has unit Frobenius norm") {
    Matrix mu = random_matrix(5, 1, 31);
    Matrix mv = random_matrix(7, 1, 32);
    Vector u = mu.col(0) / mu.col(0).norm();
    Vector v = mv.col(0) / mv.col(0).norm();
    Matrix o = filet::outer(u, v);
    double fro = 0.0;
    for (Index i = 0; i < o.rows(); ++i)
        for (Index j = 0; j < o.cols(); ++j) fro += o(i, j) * o(i, j);
    CHECK(std::abs(std::sqrt(fro) - 1.0) <= 1e-12);
}

TEST_CASE("vec_columns stacks column-major") {
    Matrix m(2, 2);
    m << 1, 3, 2, 4;
    Vector v = filet::vec_columns(m);
    CHECK(v(0) == 1.0);
    CHECK(v(1) == 2.0);
    CHECK(v(2) == 3.0);
    CHECK(v(3) == 4.0);
}

TEST_CASE("require_finite rejects NaN and Inf") {
    Matrix m = Matrix::Zero(2, 2);
    m(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(filet::require_finite(m, "test"), std::runtime_error);
    m(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(filet::require_finite(m, "test"), std::runtime_error);
    m(1, 1) = 0.0;
    CHECK_NOTHROW(filet::require_finite(m, "test"));
}
