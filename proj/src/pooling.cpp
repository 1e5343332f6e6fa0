#include "ocl/pooling.hpp"

namespace ocl {

namespace {

void check_nonempty(const FeatureMap& fm, const char* op) {
  if (fm.channels < 1 || fm.spatial() < 1)
    throw InvalidInput(std::string(op) + ": empty feature map");
}

}  // namespace

VecD avg_pool(const FeatureMap& fm) {
  check_nonempty(fm, "avg_pool");
  const int hw = fm.spatial();
  VecD out(fm.channels);
  for (int c = 0; c < fm.channels; ++c) {
    double s = 0.0;
    const double* p = fm.data.data() + static_cast<size_t>(c) * hw;
    for (int t = 0; t < hw; ++t) s += p[t];
    out[c] = s / hw;
  }
  return out;
}

FeatureMap avg_pool_backward(const FeatureMap& fm, const VecD& grad_out) {
  const int hw = fm.spatial();
  FeatureMap g(fm.channels, fm.height, fm.width);
  for (int c = 0; c < fm.channels; ++c) {
    double share = grad_out[c] / hw;
    double* p = g.data.data() + static_cast<size_t>(c) * hw;
    for (int t = 0; t < hw; ++t) p[t] = share;
  }
  return g;
}

std::pair<VecD, std::vector<int>> max_pool(const FeatureMap& fm) {
  check_nonempty(fm, "max_pool");
  const int hw = fm.spatial();
  VecD out(fm.channels);
  std::vector<int> arg(fm.channels);
  for (int c = 0; c < fm.channels; ++c) {
    const double* p = fm.data.data() + static_cast<size_t>(c) * hw;
    int best = 0;
    for (int t = 1; t < hw; ++t)
      if (p[t] > p[best]) best = t;
    out[c] = p[best];
    arg[c] = best;
  }
  return {out, arg};
}

FeatureMap max_pool_backward(const FeatureMap& fm,
                             const std::vector<int>& argmax,
                             const VecD& grad_out) {
  const int hw = fm.spatial();
  FeatureMap g(fm.channels, fm.height, fm.width);
  for (int c = 0; c < fm.channels; ++c)
    g.data[static_cast<size_t>(c) * hw + argmax[c]] = grad_out[c];
  return g;
}

VecD fuse(const PooledPair& pair) {
  if (pair.v_ap.size() != pair.v_mp.size())
    throw InvalidInput("fuse: branch dimensions differ");
  VecD out(pair.v_ap.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * (pair.v_ap[i] + pair.v_mp[i]);
  return out;
}

std::pair<VecD, VecD> fuse_backward(const VecD& grad_out) {
  VecD half(grad_out.size());
  for (size_t i = 0; i < half.size(); ++i) half[i] = 0.5 * grad_out[i];
  return {half, half};
}

HeadOutput head_pool(const std::vector<FeatureMap>& maps_ap,
                     const std::vector<FeatureMap>& maps_mp) {
  if (maps_ap.empty() || maps_ap.size() != maps_mp.size())
    throw InvalidInput("head_pool: batch size mismatch");
  const int B = static_cast<int>(maps_ap.size());
  const int d = maps_ap[0].channels;
  if (maps_mp[0].channels != d)
    throw InvalidInput("head_pool: pathway channel counts differ");

  HeadOutput out;
  out.v_ap = Matrix(B, d);
  out.v_mp = Matrix(B, d);
  out.fused = Matrix(B, d);
  out.argmax.resize(B);

#pragma omp parallel for
  for (int i = 0; i < B; ++i) {
    VecD ap = avg_pool(maps_ap[i]);
    auto [mp, arg] = max_pool(maps_mp[i]);
    out.argmax[i] = std::move(arg);
    for (int c = 0; c < d; ++c) {
      out.v_ap(i, c) = ap[c];
      out.v_mp(i, c) = mp[c];
      out.fused(i, c) = 0.5 * (ap[c] + mp[c]);
    }
  }
  return out;
}

HeadOutput head_losses(const std::vector<FeatureMap>& maps_ap,
                       const std::vector<FeatureMap>& maps_mp,
                       const std::vector<int>& labels, double margin) {
  if (maps_ap.size() != labels.size())
    throw InvalidInput("head_losses: label count != batch size");
  HeadOutput out = head_pool(maps_ap, maps_mp);
  EmbeddingBatch ap_batch{out.v_ap, labels};
  EmbeddingBatch mp_batch{out.v_mp, labels};
  out.triplet_ap = triplet_batch_hard(ap_batch, margin);
  out.triplet_mp = triplet_batch_hard(mp_batch, margin);
  return out;
}

HeadGrads head_backward(const HeadOutput& out,
                        const std::vector<FeatureMap>& maps_ap,
                        const std::vector<FeatureMap>& maps_mp,
                        const Matrix& grad_fused, double branch_weight) {
  const int B = static_cast<int>(maps_ap.size());
  const int d = out.v_ap.cols;
  HeadGrads grads;
  grads.ap.resize(B);
  grads.mp.resize(B);

  const bool use_branches = branch_weight != 0.0 &&
                            out.triplet_ap.grad_features.has_value() &&
                            out.triplet_mp.grad_features.has_value();

#pragma omp parallel for
  for (int i = 0; i < B; ++i) {
    VecD g_ap(d), g_mp(d);
    for (int c = 0; c < d; ++c) {
      double half = 0.5 * grad_fused(i, c);
      g_ap[c] = half;
      g_mp[c] = half;
      if (use_branches) {
        g_ap[c] += branch_weight * (*out.triplet_ap.grad_features)(i, c);
        g_mp[c] += branch_weight * (*out.triplet_mp.grad_features)(i, c);
      }
    }
    grads.ap[i] = avg_pool_backward(maps_ap[i], g_ap);
    grads.mp[i] = max_pool_backward(maps_mp[i], out.argmax[i], g_mp);
  }
  return grads;
}

}  // namespace ocl
