#pragma once

#include "filet/dense.hpp"

#include <cstdint>
#include <vector>

namespace filet {

// Surrogate singular basis built from W0 alone, no SVD involved.
struct SurrogateBasis {
    Matrix v_hat;                // n x n, unit columns where live
    Matrix u_hat;                // m x n, unit columns where live
    std::vector<bool> dead_mask;  // union of both normalization stages
};

// Per-direction Fisher Energies; dead directions carry an +inf sentinel.
struct EnergySpectrum {
    Vector energies;
    std::vector<bool> dead_mask;
};

enum class SelectionCriterion { min_energy, max_energy, random };
enum class ScalingMode { fisher, svd_sigma };
enum class BasisKind { surrogate, exact_svd };

struct SelectionStrategy {
    SelectionCriterion criterion = SelectionCriterion::min_energy;
    ScalingMode scaling = ScalingMode::fisher;
    BasisKind basis = BasisKind::surrogate;
    std::uint64_t rng_seed = 0;
};

/// Rejects strategies that pair svd-sigma scaling with a surrogate basis.
void validate(const SelectionStrategy& strategy);

/// V_hat = normalize(W0ᵀW0), U_hat = normalize(W0 V_hat).
SurrogateBasis surrogate_basis(const Matrix& w0);

/// Plain SVD of W0; candidate count is min(m, n).
SvdResult exact_svd_basis(const Matrix& w0);

/// energies[j] = (V[:,j]ᵀ S_X V[:,j]) * (U[:,j]ᵀ S_Y U[:,j]), clamped at 0.
EnergySpectrum project_energies(const SurrogateBasis& basis, const Matrix& s_x, const Matrix& s_y);
EnergySpectrum project_energies(const SvdResult& basis, const Matrix& s_x, const Matrix& s_y);

/// Picks r live directions per the strategy; output sorted ascending by index.
std::vector<Index> select(const EnergySpectrum& spectrum, Index r,
                          const SelectionStrategy& strategy);

enum class GroupAggregate { sum, mean };

double group_energy(const EnergySpectrum& spectrum, const std::vector<Index>& indices,
                    GroupAggregate aggregate = GroupAggregate::sum);

}  // namespace filet
