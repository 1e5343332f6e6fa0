#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ocl/matrix.hpp"

namespace ocl {

// B feature vectors (rows) with identity labels.
struct EmbeddingBatch {
  Matrix features;          // B x d
  std::vector<int> labels;  // values in [0, M)

  int size() const { return features.rows; }
  int dim() const { return features.cols; }

  void validate(int num_classes) const {
    if (features.rows < 1) throw InvalidInput("EmbeddingBatch: empty batch");
    if (static_cast<int>(labels.size()) != features.rows)
      throw InvalidInput("EmbeddingBatch: label count != batch size");
    features.require_finite("EmbeddingBatch.features");
    for (int y : labels)
      if (y < 0 || y >= num_classes)
        throw InvalidInput("EmbeddingBatch: label " + std::to_string(y) +
                           " out of range [0, " + std::to_string(num_classes) +
                           ")");
  }
};

// Class centers stored as the columns of the pre-softmax weight matrix W.
struct CenterBank {
  Matrix W;  // d x M, column i is the center of class i

  int dim() const { return W.rows; }
  int num_classes() const { return W.cols; }

  VecD center(int cls) const { return W.col_copy(cls); }
};

enum class MaskStrategy { Bernoulli, Weighted, Hard };

std::string to_string(MaskStrategy s);
MaskStrategy mask_strategy_from_string(const std::string& s);

// Binary unit selector over the embedding dimension.
struct SubspaceMask {
  std::vector<uint8_t> bits;
  MaskStrategy strategy_tag = MaskStrategy::Bernoulli;

  int dim() const { return static_cast<int>(bits.size()); }
  int popcount() const {
    int n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }
  static SubspaceMask ones(int d) {
    SubspaceMask m;
    m.bits.assign(d, 1);
    return m;
  }
};

struct MaskConfig {
  double p = 0.5;
  MaskStrategy strategy = MaskStrategy::Bernoulli;
};

struct LossWeights {
  double alpha1 = 1.0;           // triplet
  double alpha2 = 5e-4;          // masked intra
  double alpha3 = 1e-2;          // inter (orthogonality)
  double lambda_orth = 1.0;      // inner scale of the orthogonal term
  double triplet_margin = 0.3;
  double euclid_margin = 1.0;
  bool euclid_exclude_same_class = false;

  void validate() const {
    auto bad = [](double v) { return !(v >= 0.0) || !std::isfinite(v); };
    if (bad(alpha1) || bad(alpha2) || bad(alpha3) || bad(lambda_orth) ||
        bad(triplet_margin) || bad(euclid_margin))
      throw InvalidInput("LossWeights: all weights must be finite and >= 0");
  }
};

// Scalar loss plus gradients for whichever tensors participate. Gradients a
// loss does not produce stay absent rather than silently zero-filled.
struct LossReport {
  double value = 0.0;
  std::optional<Matrix> grad_features;  // B x d
  std::optional<Matrix> grad_centers;   // d x M
};

}  // namespace ocl
