#pragma once

#include "filet/dense.hpp"
#include "filet/micrograd.hpp"

#include <functional>
#include <vector>

namespace filet {

struct LoraInit {
    Index layer_id = 0;
    std::vector<Index> indices;  // selected candidate indices, length rank
    Vector sigma_sel;            // per-direction magnitudes, non-negative
    Matrix a;                    // rank x n
    Matrix b;                    // m x rank
    Matrix w_res;                // m x n frozen residual
    double scale = 0.0;
    double alpha = 0.0;
    Index rank = 0;
};

// A rank-1 probe direction Z = u vᵀ with unit factors.
struct Direction {
    Vector u;
    Vector v;
};

/// A = diag(√sigma) V_selᵀ and B = U_sel diag(√sigma); scale = alpha/rank
/// (raw_alpha keeps scale = alpha). normalize_sigma rescales sigma by its max
/// before building.
LoraInit build_factors(const Matrix& u_sel, const Matrix& v_sel, const Vector& sigma_sel,
                       double alpha, bool raw_alpha = false, bool normalize_sigma = false);

/// Fills init.w_res = w0 - scale·B·A.
void decompose(const Matrix& w0, LoraInit& init);

/// (W_res + scale·B·A)·x without materializing the summed weight.
Matrix adapted_forward(const LoraInit& init, const Matrix& x);

using LossEval = std::function<double(const Matrix&)>;

/// ΔL_sym = ½[L(W0+γZ) + L(W0-γZ)] - L(W0); first-order terms cancel.
double sym_perturb_probe(const LossEval& loss_eval, const Matrix& w0, const Direction& z,
                         double gamma);

struct TaylorRow {
    Index direction = 0;
    double gamma = 0.0;
    double probe_over_gamma_sq = 0.0;   // ΔL_sym / γ²
    double half_factored_energy = 0.0;  // ½·(vᵀ S_X v)(uᵀ S_Y u)
};

struct TaylorReport {
    std::vector<TaylorRow> rows;  // directions × gammas, direction-major
    double spearman = 0.0;        // probe curvature vs factored energy,
                                  // taken at the smallest gamma
};

/// Probes every direction at every gamma against the factored energies.
TaylorReport taylor_report(const LossEval& loss_eval, const Matrix& w0,
                           const std::vector<Direction>& directions,
                           const std::vector<double>& gammas, const Matrix& s_x,
                           const Matrix& s_y);

enum class SigmaMode { min, max };

/// Slices r consecutive singular directions for group i of group_count and
/// scales all of them by the global extremal singular value.
LoraInit preliminary_init(const SvdResult& svd_result, const Matrix& w0, Index group_index,
                          Index group_count, Index r, SigmaMode mode, double alpha,
                          bool raw_alpha = false);

/// Spearman rank correlation with midrank tie handling.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace filet
