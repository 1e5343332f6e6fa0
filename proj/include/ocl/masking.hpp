#pragma once

#include "ocl/common.hpp"
#include "ocl/types.hpp"

namespace ocl {

// u[k] = sum_i (v_i^k - c_{y_i}^k)^2. Coordinate-wise split of l_intra; the
// entries sum to the l_intra value and drive the weighted/hard strategies.
VecD per_unit_intra_dist(const EmbeddingBatch& batch, const CenterBank& bank);

// Each bit independently 1 with probability p.
SubspaceMask sample_bernoulli(const MaskConfig& cfg, int d, Rng& rng);

// Exactly round(p*d) distinct units, drawn sequentially without replacement
// with probability proportional to unit_dists. All-zero remaining weight
// falls back to uniform draws.
SubspaceMask sample_weighted(const MaskConfig& cfg, const VecD& unit_dists,
                             Rng& rng);

// The round(p*d) units with the largest unit_dists; ties broken toward the
// lowest index. Deterministic.
SubspaceMask sample_hard(const MaskConfig& cfg, const VecD& unit_dists);

}  // namespace ocl
