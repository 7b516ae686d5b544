#pragma once

#include "filet/dense.hpp"
#include "filet/micrograd.hpp"

#include <vector>

namespace filet {

// Running Kronecker-factor accumulators for one linear layer.
struct FisherFactors {
    Index layer_id = 0;
    Matrix s_x;               // n x n
    Matrix s_y;               // m x m
    Index batches_seen = 0;   // T
    Index columns_seen = 0;
    bool alg1_literal = false;  // divide per-tap sums by the feature dim, not l
};

struct FinalizedFactors {
    Matrix s_x;
    Matrix s_y;
};

// Exact second moment of vec'd per-sample gradients; tiny layers only.
struct FullFisher {
    Index layer_id = 0;
    Matrix s_w;  // (m*n) x (m*n), column-major vec ordering
    Index sample_count = 0;
};

inline constexpr Index kFullFisherGuard = 256;  // max m*n

FisherFactors make_factors(Index layer_id, Index n, Index m, bool alg1_literal = false);

/// Adds one tap: S_X += X Xᵀ / c and S_Y += G Gᵀ / c, with c the tap column
/// count (or the feature dimension under alg1_literal).
void accumulate(FisherFactors& factors, const LayerTap& tap);

/// Mean over batches, symmetrized.
FinalizedFactors finalize(const FisherFactors& factors);

/// Combines sharded accumulators for the same layer in index order.
FisherFactors merge(const std::vector<FisherFactors>& shards);

/// Mean over per-sample outer products vec(G_j X_jᵀ) vec(G_j X_jᵀ)ᵀ.
FullFisher full_fisher(const std::vector<LayerTap>& taps);

/// vec(uvᵀ)ᵀ S_W vec(uvᵀ) for unit u, v.
double fisher_energy_exact(const FullFisher& fisher, const Vector& u, const Vector& v);

/// (vᵀ S_X v)(uᵀ S_Y u) for unit u, v.
double fisher_energy_factored(const Matrix& s_x, const Matrix& s_y, const Vector& u,
                              const Vector& v);

}  // namespace filet
