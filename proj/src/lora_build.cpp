#include "filet/lora_build.hpp"

#include "filet/fisher_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace filet {

LoraInit build_factors(const Matrix& u_sel, const Matrix& v_sel, const Vector& sigma_sel,
                       double alpha, bool raw_alpha, bool normalize_sigma) {
    const Index r = sigma_sel.size();
    if (r < 1) {
        throw std::invalid_argument("build_factors: empty selection");
    }
    if (u_sel.cols() != r || v_sel.cols() != r) {
        throw std::invalid_argument("build_factors: " + std::to_string(r) + " sigmas but " +
                                    std::to_string(u_sel.cols()) + "/" +
                                    std::to_string(v_sel.cols()) + " basis columns");
    }
    if (sigma_sel.minCoeff() < 0.0) {
        throw std::invalid_argument("build_factors: negative sigma");
    }

    LoraInit init;
    init.rank = r;
    init.alpha = alpha;
    init.scale = raw_alpha ? alpha : alpha / static_cast<double>(r);
    init.sigma_sel = sigma_sel;
    if (normalize_sigma) {
        const double top = sigma_sel.maxCoeff();
        if (top > 0.0) init.sigma_sel /= top;
    }
    init.a.resize(r, v_sel.rows());
    init.b.resize(u_sel.rows(), r);
    for (Index i = 0; i < r; ++i) {
        const double root = std::sqrt(init.sigma_sel(i));
        init.a.row(i) = root * v_sel.col(i).transpose();
        init.b.col(i) = root * u_sel.col(i);
    }
    require_finite(init.a, "lora A");
    require_finite(init.b, "lora B");
    return init;
}

void decompose(const Matrix& w0, LoraInit& init) {
    if (w0.rows() != init.b.rows() || w0.cols() != init.a.cols()) {
        throw std::invalid_argument("decompose: w0 is " + std::to_string(w0.rows()) + "x" +
                                    std::to_string(w0.cols()) + ", factors give " +
                                    std::to_string(init.b.rows()) + "x" +
                                    std::to_string(init.a.cols()));
    }
    init.w_res = w0 - init.scale * (init.b * init.a);
    require_finite(init.w_res, "lora W_res");
}

Matrix adapted_forward(const LoraInit& init, const Matrix& x) {
    if (x.rows() != init.w_res.cols()) {
        throw std::invalid_argument("adapted_forward: input has " + std::to_string(x.rows()) +
                                    " rows, layer wants " + std::to_string(init.w_res.cols()));
    }
    Matrix out = init.w_res * x + init.scale * (init.b * (init.a * x));
    require_finite(out, "adapted_forward output");
    return out;
}

double sym_perturb_probe(const LossEval& loss_eval, const Matrix& w0, const Direction& z,
                         double gamma) {
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("sym_perturb_probe: gamma must be positive");
    }
    if (std::abs(z.u.norm() - 1.0) > 1e-9 || std::abs(z.v.norm() - 1.0) > 1e-9) {
        throw std::invalid_argument("sym_perturb_probe: direction factors must be unit");
    }
    const Matrix step = gamma * outer(z.u, z.v);
    const double up = loss_eval(w0 + step);
    const double down = loss_eval(w0 - step);
    const double base = loss_eval(w0);
    const double probe = 0.5 * (up + down) - base;
    if (!std::isfinite(probe)) {
        throw std::runtime_error("sym_perturb_probe: non-finite loss under gamma=" +
                                 std::to_string(gamma));
    }
    return probe;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("spearman: need two equal-length series");
    }
    auto midranks = [](const std::vector<double>& v) {
        const size_t n = v.size();
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> rank(n);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
            for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
            i = j + 1;
        }
        return rank;
    };
    const std::vector<double> rx = midranks(x);
    const std::vector<double> ry = midranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if (vx == 0.0 || vy == 0.0) return 0.0;
    return cov / std::sqrt(vx * vy);
}

TaylorReport taylor_report(const LossEval& loss_eval, const Matrix& w0,
                           const std::vector<Direction>& directions,
                           const std::vector<double>& gammas, const Matrix& s_x,
                           const Matrix& s_y) {
    if (directions.empty() || gammas.empty()) {
        throw std::invalid_argument("taylor_report: need directions and gammas");
    }
    TaylorReport report;
    std::vector<double> probe_at_smallest(directions.size(), 0.0);
    std::vector<double> energies(directions.size(), 0.0);

    double smallest = gammas[0];
    for (double g : gammas) smallest = std::min(smallest, g);

    for (size_t d = 0; d < directions.size(); ++d) {
        const Direction& z = directions[d];
        const double energy = fisher_energy_factored(s_x, s_y, z.u, z.v);
        energies[d] = energy;
        for (double gamma : gammas) {
            TaylorRow row;
            row.direction = static_cast<Index>(d);
            row.gamma = gamma;
            row.probe_over_gamma_sq =
                sym_perturb_probe(loss_eval, w0, z, gamma) / (gamma * gamma);
            row.half_factored_energy = 0.5 * energy;
            if (gamma == smallest) probe_at_smallest[d] = row.probe_over_gamma_sq;
            report.rows.push_back(row);
        }
    }
    report.spearman =
        directions.size() < 2 ? 0.0 : spearman(probe_at_smallest, energies);
    return report;
}

LoraInit preliminary_init(const SvdResult& svd_result, const Matrix& w0, Index group_index,
                          Index group_count, Index r, SigmaMode mode, double alpha,
                          bool raw_alpha) {
    const Index h = svd_result.sigma.size();
    if (group_count < 1 || group_index < 0 || group_index >= group_count) {
        throw std::invalid_argument("preliminary_init: group " + std::to_string(group_index) +
                                    " of " + std::to_string(group_count));
    }
    const Index start = group_index * h / group_count;
    if (r < 1 || start + r > h) {
        throw std::invalid_argument("preliminary_init: slice [" + std::to_string(start) + "," +
                                    std::to_string(start + r) + ") overflows " +
                                    std::to_string(h) + " candidates");
    }
    const double sigma_global =
        mode == SigmaMode::min ? svd_result.sigma(h - 1) : svd_result.sigma(0);

    Matrix u_sel(svd_result.u.rows(), r);
    Matrix v_sel(svd_result.v.rows(), r);
    Vector sigma_sel = Vector::Constant(r, sigma_global);
    std::vector<Index> indices;
    for (Index i = 0; i < r; ++i) {
        u_sel.col(i) = svd_result.u.col(start + i);
        v_sel.col(i) = svd_result.v.col(start + i);
        indices.push_back(start + i);
    }
    LoraInit init = build_factors(u_sel, v_sel, sigma_sel, alpha, raw_alpha);
    init.indices = std::move(indices);
    decompose(w0, init);
    return init;
}

}  // namespace filet
