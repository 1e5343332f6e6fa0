#pragma once

#include "ocl/types.hpp"

namespace ocl {

// Mean cross-entropy of softmax(W^T v) against the labels. Logits carry no
// bias term so the columns of W keep their center interpretation.
LossReport softmax_ce(const EmbeddingBatch& batch, const CenterBank& bank);

// Batch-hard triplet loss with Euclidean (non-squared) distances: per anchor,
// hinge on hardest-positive minus hardest-negative distance, averaged over
// anchors that have at least one positive and one negative.
LossReport triplet_batch_hard(const EmbeddingBatch& batch, double margin);

// Sum of squared distances from each sample to its class center.
LossReport l_intra(const EmbeddingBatch& batch, const CenterBank& bank);

// Same, restricted to the units selected by the mask. All-ones mask equals
// l_intra bit-for-bit; all-zeros is legal and returns 0 with zero gradients.
LossReport l_intra_masked(const EmbeddingBatch& batch, const CenterBank& bank,
                          const SubspaceMask& mask);

// lambda * |Chat^T Chat - I|_F^2 over the L2-normalized centers of the given
// batch classes. Normalization happens on the fly; W is never mutated.
LossReport l_inter_orth(const CenterBank& bank,
                        const std::vector<int>& batch_classes, double lambda);

// Max-correlation relaxation: max entry of |Chat^T Chat - I|, subgradient on
// the single maximizing entry (lowest (i,j) on ties).
LossReport l_inter_max(const CenterBank& bank,
                       const std::vector<int>& batch_classes);

// Hinge on pairwise center distances over ordered batch sample pairs.
// Same-class pairs contribute the full margin m unless excluded.
LossReport l_inter_euclid(const EmbeddingBatch& batch, const CenterBank& bank,
                          double m, bool exclude_same_class = false);

// Per-term values of the combined objective, for traces and tests.
struct TotalLossBreakdown {
  double softmax = 0.0;
  double triplet = 0.0;
  double intra_masked = 0.0;
  double inter = 0.0;
};

// L_softmax + a1*L_triplet + a2*L_intra^m + a3*L_inter with gradients
// accumulated across terms. Components with zero weight are skipped.
LossReport total_loss(const EmbeddingBatch& batch, const CenterBank& bank,
                      const LossWeights& weights, const SubspaceMask& mask,
                      const std::vector<int>& batch_classes,
                      TotalLossBreakdown* breakdown = nullptr);

// Distinct labels of a batch in ascending order.
std::vector<int> batch_class_set(const EmbeddingBatch& batch);

}  // namespace ocl
