#include "ocl/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ocl {

namespace {

void check_p(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw InvalidInput("MaskConfig.p must lie in [0, 1]");
}

int target_count(double p, int d) {
  return static_cast<int>(std::llround(p * d));
}

}  // namespace

VecD per_unit_intra_dist(const EmbeddingBatch& batch, const CenterBank& bank) {
  batch.validate(bank.num_classes());
  if (batch.dim() != bank.dim())
    throw InvalidInput("per_unit_intra_dist: dimension mismatch");
  const int B = batch.size();
  const int d = batch.dim();
  VecD u(d, 0.0);
#pragma omp parallel for
  for (int k = 0; k < d; ++k) {
    double s = 0.0;
    for (int i = 0; i < B; ++i) {
      double diff = batch.features(i, k) - bank.W(k, batch.labels[i]);
      s += diff * diff;
    }
    u[k] = s;
  }
  return u;
}

SubspaceMask sample_bernoulli(const MaskConfig& cfg, int d, Rng& rng) {
  check_p(cfg.p);
  SubspaceMask m;
  m.strategy_tag = MaskStrategy::Bernoulli;
  m.bits.resize(d);
  for (int k = 0; k < d; ++k) m.bits[k] = rng.bernoulli(cfg.p) ? 1 : 0;
  return m;
}

SubspaceMask sample_weighted(const MaskConfig& cfg, const VecD& unit_dists,
                             Rng& rng) {
  check_p(cfg.p);
  for (double w : unit_dists)
    if (!(w >= 0.0))
      throw InvalidInput("sample_weighted: weights must be >= 0");
  const int d = static_cast<int>(unit_dists.size());
  const int n = target_count(cfg.p, d);

  SubspaceMask m;
  m.strategy_tag = MaskStrategy::Weighted;
  m.bits.assign(d, 0);

  VecD w(unit_dists);
  std::vector<int> remaining(d);
  std::iota(remaining.begin(), remaining.end(), 0);

  for (int draw = 0; draw < n; ++draw) {
    double total = 0.0;
    for (int idx : remaining) total += w[idx];
    size_t pick = 0;
    if (total <= 0.0) {
      pick = static_cast<size_t>(rng.uniform_int(remaining.size()));
    } else {
      double r = rng.uniform01() * total;
      double acc = 0.0;
      pick = remaining.size() - 1;
      for (size_t t = 0; t < remaining.size(); ++t) {
        acc += w[remaining[t]];
        if (r < acc) {
          pick = t;
          break;
        }
      }
    }
    m.bits[remaining[pick]] = 1;
    remaining.erase(remaining.begin() + pick);
  }
  return m;
}

SubspaceMask sample_hard(const MaskConfig& cfg, const VecD& unit_dists) {
  check_p(cfg.p);
  for (double w : unit_dists)
    if (!(w >= 0.0)) throw InvalidInput("sample_hard: weights must be >= 0");
  const int d = static_cast<int>(unit_dists.size());
  const int n = target_count(cfg.p, d);

  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (unit_dists[a] != unit_dists[b]) return unit_dists[a] > unit_dists[b];
    return a < b;
  });

  SubspaceMask m;
  m.strategy_tag = MaskStrategy::Hard;
  m.bits.assign(d, 0);
  for (int t = 0; t < n; ++t) m.bits[order[t]] = 1;
  return m;
}

}  // namespace ocl
