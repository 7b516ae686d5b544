#include "filet/fisher_stats.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace filet {

namespace {

void require_unit(const Vector& v, const char* name) {
    const double norm = v.norm();
    if (std::abs(norm - 1.0) > 1e-9) {
        throw std::invalid_argument(std::string("fisher energy: ") + name + " has norm " +
                                    std::to_string(norm) + ", expected 1");
    }
}

Matrix symmetrized(const Matrix& m) {
    return ((m + m.transpose()) * 0.5).eval();
}

}  // namespace

FisherFactors make_factors(Index layer_id, Index n, Index m, bool alg1_literal) {
    if (n < 1 || m < 1) {
        throw std::invalid_argument("make_factors: dims must be positive");
    }
    FisherFactors f;
    f.layer_id = layer_id;
    f.s_x = Matrix::Zero(n, n);
    f.s_y = Matrix::Zero(m, m);
    f.alg1_literal = alg1_literal;
    return f;
}

void accumulate(FisherFactors& factors, const LayerTap& tap) {
    if (tap.X.rows() != factors.s_x.rows() || tap.G.rows() != factors.s_y.rows()) {
        throw std::invalid_argument(
            "accumulate: tap is " + std::to_string(tap.G.rows()) + "x" +
            std::to_string(tap.X.rows()) + ", factors expect " +
            std::to_string(factors.s_y.rows()) + "x" + std::to_string(factors.s_x.rows()));
    }
    if (tap.X.cols() != tap.G.cols() || tap.X.cols() < 1) {
        throw std::invalid_argument("accumulate: tap has mismatched or empty columns");
    }
    const double cx = factors.alg1_literal ? static_cast<double>(tap.X.rows())
                                           : static_cast<double>(tap.X.cols());
    const double cy = factors.alg1_literal ? static_cast<double>(tap.G.rows())
                                           : static_cast<double>(tap.G.cols());
    factors.s_x += tap.X * tap.X.transpose() / cx;
    factors.s_y += tap.G * tap.G.transpose() / cy;
    factors.batches_seen += 1;
    factors.columns_seen += tap.X.cols();
}

FinalizedFactors finalize(const FisherFactors& factors) {
    if (factors.batches_seen < 1) {
        throw std::invalid_argument("finalize: no taps accumulated");
    }
    const double t = static_cast<double>(factors.batches_seen);
    FinalizedFactors out;
    out.s_x = symmetrized(factors.s_x / t);
    out.s_y = symmetrized(factors.s_y / t);
    require_finite(out.s_x, "finalized S_X");
    require_finite(out.s_y, "finalized S_Y");
    return out;
}

FisherFactors merge(const std::vector<FisherFactors>& shards) {
    if (shards.empty()) {
        throw std::invalid_argument("merge: no shards");
    }
    FisherFactors out = shards[0];
    for (size_t i = 1; i < shards.size(); ++i) {
        const FisherFactors& s = shards[i];
        if (s.layer_id != out.layer_id || s.s_x.rows() != out.s_x.rows() ||
            s.s_y.rows() != out.s_y.rows() || s.alg1_literal != out.alg1_literal) {
            throw std::invalid_argument("merge: shard " + std::to_string(i) +
                                        " disagrees with shard 0");
        }
        out.s_x += s.s_x;
        out.s_y += s.s_y;
        out.batches_seen += s.batches_seen;
        out.columns_seen += s.columns_seen;
    }
    return out;
}

FullFisher full_fisher(const std::vector<LayerTap>& taps) {
    if (taps.empty()) {
        throw std::invalid_argument("full_fisher: no taps");
    }
    const Index n = taps[0].X.rows();
    const Index m = taps[0].G.rows();
    if (m * n > kFullFisherGuard) {
        throw std::invalid_argument("full_fisher: layer has " + std::to_string(m * n) +
                                    " weights, over the " + std::to_string(kFullFisherGuard) +
                                    " oracle limit");
    }
    FullFisher out;
    out.layer_id = taps[0].layer_id;
    out.s_w = Matrix::Zero(m * n, m * n);
    for (const LayerTap& tap : taps) {
        if (tap.X.rows() != n || tap.G.rows() != m || tap.X.cols() != tap.G.cols()) {
            throw std::invalid_argument("full_fisher: tap shape disagrees with the first tap");
        }
        for (Index j = 0; j < tap.X.cols(); ++j) {
            Matrix grad = tap.G.col(j) * tap.X.col(j).transpose();
            Vector w = vec_columns(grad);
            out.s_w += w * w.transpose();
            out.sample_count += 1;
        }
    }
    out.s_w = symmetrized(out.s_w / static_cast<double>(out.sample_count));
    require_finite(out.s_w, "full fisher");
    return out;
}

double fisher_energy_exact(const FullFisher& fisher, const Vector& u, const Vector& v) {
    require_unit(u, "u");
    require_unit(v, "v");
    if (u.size() * v.size() != fisher.s_w.rows()) {
        throw std::invalid_argument("fisher_energy_exact: direction is " +
                                    std::to_string(u.size()) + "x" + std::to_string(v.size()) +
                                    ", fisher is " + std::to_string(fisher.s_w.rows()) + "^2");
    }
    Vector w = vec_columns(outer(u, v));
    return w.dot(fisher.s_w * w);
}

double fisher_energy_factored(const Matrix& s_x, const Matrix& s_y, const Vector& u,
                              const Vector& v) {
    require_unit(u, "u");
    require_unit(v, "v");
    if (v.size() != s_x.rows() || u.size() != s_y.rows()) {
        throw std::invalid_argument("fisher_energy_factored: direction dims " +
                                    std::to_string(u.size()) + "," + std::to_string(v.size()) +
                                    " do not match factors " + std::to_string(s_y.rows()) + "," +
                                    std::to_string(s_x.rows()));
    }
    return v.dot(s_x * v) * u.dot(s_y * u);
}

}  // namespace filet
