#pragma once

#include "ocl/losses.hpp"
#include "ocl/types.hpp"

namespace ocl {

// Pre-pooling spatial activations of one sample, channel-major.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  VecD data;  // channels * height * width

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w),
        data(static_cast<size_t>(c) * h * w, fill) {}

  double& at(int c, int h, int w) {
    return data[(static_cast<size_t>(c) * height + h) * width + w];
  }
  double at(int c, int h, int w) const {
    return data[(static_cast<size_t>(c) * height + h) * width + w];
  }
  int spatial() const { return height * width; }
};

struct PooledPair {
  VecD v_ap;
  VecD v_mp;
  std::vector<int> argmax;  // flat spatial index of the max, per channel
};

VecD avg_pool(const FeatureMap& fm);
// Distributes the upstream gradient uniformly over spatial positions.
FeatureMap avg_pool_backward(const FeatureMap& fm, const VecD& grad_out);

// Per-channel max with recorded argmax (lowest row-major index on ties).
std::pair<VecD, std::vector<int>> max_pool(const FeatureMap& fm);
// Routes each channel's gradient to its argmax position only.
FeatureMap max_pool_backward(const FeatureMap& fm,
                             const std::vector<int>& argmax,
                             const VecD& grad_out);

// (v_ap + v_mp) / 2.
VecD fuse(const PooledPair& pair);
// Half of the upstream gradient to each branch; their sum is exactly g.
std::pair<VecD, VecD> fuse_backward(const VecD& grad_out);

// Dual-pooling head over a batch. maps_ap and maps_mp may alias (shared
// pathway) or differ (split pathways); avg pooling reads the first list,
// max pooling the second.
struct HeadOutput {
  Matrix v_ap;   // B x d
  Matrix v_mp;   // B x d
  Matrix fused;  // B x d
  std::vector<std::vector<int>> argmax;  // per sample, per channel
  LossReport triplet_ap;
  LossReport triplet_mp;
};

// Pooling and fusion only; triplet reports stay empty.
HeadOutput head_pool(const std::vector<FeatureMap>& maps_ap,
                     const std::vector<FeatureMap>& maps_mp);

HeadOutput head_losses(const std::vector<FeatureMap>& maps_ap,
                       const std::vector<FeatureMap>& maps_mp,
                       const std::vector<int>& labels, double margin);

inline HeadOutput head_losses(const std::vector<FeatureMap>& maps,
                              const std::vector<int>& labels, double margin) {
  return head_losses(maps, maps, labels, margin);
}

// Gradient into the feature maps: each branch receives its triplet-loss path
// scaled by branch_weight plus half of grad_fused. With a shared pathway the
// caller adds the two lists.
struct HeadGrads {
  std::vector<FeatureMap> ap;
  std::vector<FeatureMap> mp;
};

HeadGrads head_backward(const HeadOutput& out,
                        const std::vector<FeatureMap>& maps_ap,
                        const std::vector<FeatureMap>& maps_mp,
                        const Matrix& grad_fused, double branch_weight);

}  // namespace ocl
