#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace filet {

// Row-major double matrices everywhere; the checkpoint format and all
// external payloads are row-major, so the in-memory layout matches.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Throws std::runtime_error if any entry of m is NaN or Inf.
void require_finite(const Matrix& m, const std::string& what);
void require_finite(const Vector& v, const std::string& what);

/// Product a*b with shape validation and finiteness check on the result.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Gram matrix WᵀW, symmetrized to scrub roundoff.
Matrix gram(const Matrix& w);

struct NormalizedColumns {
    Matrix matrix;
    std::vector<bool> zero_mask;  // true where the column norm was <= threshold
};

inline constexpr double kZeroColumnThreshold = 1e-12;

/// Column-wise l2 normalization. Columns with norm <= kZeroColumnThreshold
/// are returned unchanged and flagged in zero_mask.
NormalizedColumns normalize_columns(const Matrix& m);

struct SvdResult {
    Matrix u;      // m x m
    Vector sigma;  // min(m, n), non-increasing
    Matrix v;      // n x n
};

/// Full SVD with a fixed sign convention: the largest-magnitude entry of each
/// column of U is made non-negative (V flipped in tandem for paired columns);
/// unpaired columns of U and V are sign-fixed by the same rule on themselves.
SvdResult svd(const Matrix& m);

inline constexpr Index kKronEntryGuard = 1'000'000;

/// Kronecker product; block (i,j) equals a(i,j)*b. Rejects results with more
/// than kKronEntryGuard entries (tiny-scale use only).
Matrix kron(const Matrix& a, const Matrix& b);

/// Indices of the k smallest values, ordered ascending by (value, index).
/// Ties go to the smaller index.
std::vector<Index> topk_min(const Vector& values, Index k);

/// Rank-1 matrix u vᵀ.
Matrix outer(const Vector& u, const Vector& v);

/// Stacks columns of m into a vector (column-major vec).
Vector vec_columns(const Matrix& m);

}  // namespace filet
