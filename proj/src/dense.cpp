#include "filet/dense.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace filet {

namespace {

std::string shape_of(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

}  // namespace

void require_finite(const Matrix& m, const std::string& what) {
    if (!m.allFinite()) {
        throw std::runtime_error(what + ": non-finite entry in " + shape_of(m) + " matrix");
    }
}

void require_finite(const Vector& v, const std::string& what) {
    if (!v.allFinite()) {
        throw std::runtime_error(what + ": non-finite entry in length-" +
                                 std::to_string(v.size()) + " vector");
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions disagree, lhs is " + shape_of(a) +
                                    ", rhs is " + shape_of(b));
    }
    Matrix c = a * b;
    require_finite(c, "matmul result");
    return c;
}

Matrix gram(const Matrix& w) {
    Matrix g = w.transpose() * w;
    g = ((g + g.transpose()) * 0.5).eval();
    require_finite(g, "gram result");
    return g;
}

NormalizedColumns normalize_columns(const Matrix& m) {
    require_finite(m, "normalize_columns input");
    NormalizedColumns out;
    out.matrix = m;
    out.zero_mask.assign(static_cast<size_t>(m.cols()), false);
    for (Index j = 0; j < m.cols(); ++j) {
        const double nrm = m.col(j).norm();
        if (nrm <= kZeroColumnThreshold) {
            out.zero_mask[static_cast<size_t>(j)] = true;
        } else {
            out.matrix.col(j) /= nrm;
        }
    }
    return out;
}

SvdResult svd(const Matrix& m) {
    require_finite(m, "svd input");
    if (m.rows() == 0 || m.cols() == 0) {
        throw std::invalid_argument("svd: empty matrix " + shape_of(m));
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> solver(m.cast<double>(),
                                             Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("svd: decomposition failed on " + shape_of(m) + " matrix");
    }
    SvdResult r;
    r.u = solver.matrixU();
    r.sigma = solver.singularValues();
    r.v = solver.matrixV();

    const Index paired = std::min(m.rows(), m.cols());
    for (Index j = 0; j < r.u.cols(); ++j) {
        Index arg = 0;
        r.u.col(j).cwiseAbs().maxCoeff(&arg);
        if (r.u(arg, j) < 0.0) {
            r.u.col(j) = -r.u.col(j);
            if (j < paired && j < r.v.cols()) {
                r.v.col(j) = -r.v.col(j);
            }
        }
    }
    for (Index j = paired; j < r.v.cols(); ++j) {
        Index arg = 0;
        r.v.col(j).cwiseAbs().maxCoeff(&arg);
        if (r.v(arg, j) < 0.0) {
            r.v.col(j) = -r.v.col(j);
        }
    }
    require_finite(r.u, "svd U");
    require_finite(r.sigma, "svd sigma");
    require_finite(r.v, "svd V");
    return r;
}

Matrix kron(const Matrix& a, const Matrix& b) {
    const Index rows = a.rows() * b.rows();
    const Index cols = a.cols() * b.cols();
    if (rows * cols > kKronEntryGuard) {
        throw std::invalid_argument("kron: result would hold " + std::to_string(rows * cols) +
                                    " entries, over the " + std::to_string(kKronEntryGuard) +
                                    " limit");
    }
    Matrix k(rows, cols);
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) {
            k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    require_finite(k, "kron result");
    return k;
}

std::vector<Index> topk_min(const Vector& values, Index k) {
    if (k < 0 || k > values.size()) {
        throw std::invalid_argument("topk_min: k=" + std::to_string(k) + " out of range for " +
                                    std::to_string(values.size()) + " values");
    }
    require_finite(values, "topk_min input");
    std::vector<Index> idx(static_cast<size_t>(values.size()));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](Index a, Index b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return a < b;
    });
    idx.resize(static_cast<size_t>(k));
    return idx;
}

Matrix outer(const Vector& u, const Vector& v) {
    Matrix m = u * v.transpose();
    require_finite(m, "outer result");
    return m;
}

Vector vec_columns(const Matrix& m) {
    Vector out(m.rows() * m.cols());
    for (Index j = 0; j < m.cols(); ++j) {
        out.segment(j * m.rows(), m.rows()) = m.col(j);
    }
    return out;
}

}  // namespace filet
