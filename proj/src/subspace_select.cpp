#include "filet/subspace_select.hpp"

#include "filet/fisher_stats.hpp"
#include "filet/rng.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace filet {

namespace {

std::vector<Index> live_indices(const EnergySpectrum& spectrum) {
    std::vector<Index> live;
    for (Index j = 0; j < spectrum.energies.size(); ++j) {
        if (!spectrum.dead_mask[static_cast<size_t>(j)]) live.push_back(j);
    }
    return live;
}

}  // namespace

void validate(const SelectionStrategy& strategy) {
    if (strategy.scaling == ScalingMode::svd_sigma && strategy.basis != BasisKind::exact_svd) {
        throw std::invalid_argument(
            "selection strategy: svd-sigma scaling needs the exact-svd basis");
    }
}

SurrogateBasis surrogate_basis(const Matrix& w0) {
    SurrogateBasis basis;
    auto v_stage = normalize_columns(gram(w0));
    basis.v_hat = std::move(v_stage.matrix);
    auto u_stage = normalize_columns(matmul(w0, basis.v_hat));
    basis.u_hat = std::move(u_stage.matrix);
    basis.dead_mask.resize(v_stage.zero_mask.size());
    for (size_t j = 0; j < basis.dead_mask.size(); ++j) {
        basis.dead_mask[j] = v_stage.zero_mask[j] || u_stage.zero_mask[j];
    }
    return basis;
}

SvdResult exact_svd_basis(const Matrix& w0) {
    return svd(w0);
}

namespace {

EnergySpectrum project_columns(const Matrix& u_cols, const Matrix& v_cols,
                               const std::vector<bool>& dead_mask, const Matrix& s_x,
                               const Matrix& s_y) {
    if (v_cols.rows() != s_x.rows() || u_cols.rows() != s_y.rows()) {
        throw std::invalid_argument("project_energies: basis is " + std::to_string(u_cols.rows()) +
                                    "x" + std::to_string(v_cols.rows()) + ", factors are " +
                                    std::to_string(s_y.rows()) + "," + std::to_string(s_x.rows()));
    }
    EnergySpectrum spectrum;
    spectrum.energies.resize(v_cols.cols());
    spectrum.dead_mask = dead_mask;
    for (Index j = 0; j < v_cols.cols(); ++j) {
        if (dead_mask[static_cast<size_t>(j)]) {
            spectrum.energies(j) = std::numeric_limits<double>::infinity();
            continue;
        }
        const double e = fisher_energy_factored(s_x, s_y, u_cols.col(j), v_cols.col(j));
        spectrum.energies(j) = std::max(0.0, e);
    }
    return spectrum;
}

}  // namespace

EnergySpectrum project_energies(const SurrogateBasis& basis, const Matrix& s_x,
                                const Matrix& s_y) {
    return project_columns(basis.u_hat, basis.v_hat, basis.dead_mask, s_x, s_y);
}

EnergySpectrum project_energies(const SvdResult& basis, const Matrix& s_x, const Matrix& s_y) {
    const Index h = std::min(basis.u.cols(), basis.v.cols());
    return project_columns(basis.u.leftCols(h), basis.v.leftCols(h),
                           std::vector<bool>(static_cast<size_t>(h), false), s_x, s_y);
}

std::vector<Index> select(const EnergySpectrum& spectrum, Index r,
                          const SelectionStrategy& strategy) {
    validate(strategy);
    std::vector<Index> live = live_indices(spectrum);
    if (r < 1 || r > static_cast<Index>(live.size())) {
        throw std::invalid_argument("select: r=" + std::to_string(r) + " but only " +
                                    std::to_string(live.size()) + " live directions");
    }

    std::vector<Index> picked;
    if (strategy.criterion == SelectionCriterion::random) {
        std::mt19937_64 rng(strategy.rng_seed);
        for (Index i = 0; i < r; ++i) {
            const auto j = static_cast<size_t>(i) +
                           bounded_draw(rng, static_cast<std::uint64_t>(live.size()) -
                                                 static_cast<std::uint64_t>(i));
            std::swap(live[static_cast<size_t>(i)], live[j]);
        }
        picked.assign(live.begin(), live.begin() + r);
    } else {
        const double flip = strategy.criterion == SelectionCriterion::max_energy ? -1.0 : 1.0;
        Vector keyed(static_cast<Index>(live.size()));
        for (size_t i = 0; i < live.size(); ++i) {
            keyed(static_cast<Index>(i)) = flip * spectrum.energies(live[i]);
        }
        for (Index pos : topk_min(keyed, r)) {
            picked.push_back(live[static_cast<size_t>(pos)]);
        }
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

double group_energy(const EnergySpectrum& spectrum, const std::vector<Index>& indices,
                    GroupAggregate aggregate) {
    if (indices.empty()) {
        throw std::invalid_argument("group_energy: empty group");
    }
    double total = 0.0;
    for (Index j : indices) {
        if (j < 0 || j >= spectrum.energies.size()) {
            throw std::invalid_argument("group_energy: index " + std::to_string(j) +
                                        " out of range");
        }
        if (spectrum.dead_mask[static_cast<size_t>(j)]) {
            throw std::invalid_argument("group_energy: index " + std::to_string(j) + " is dead");
        }
        total += spectrum.energies(j);
    }
    if (aggregate == GroupAggregate::mean) {
        total /= static_cast<double>(indices.size());
    }
    return total;
}

}  // namespace filet
