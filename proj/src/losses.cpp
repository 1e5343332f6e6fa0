#include "ocl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ocl/kernels.hpp"

namespace ocl {

namespace {

void axpy(Matrix& y, double a, const Matrix& x) {
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += a * x.data[i];
}

void check_dims(const EmbeddingBatch& batch, const CenterBank& bank,
                const char* op) {
  batch.validate(bank.num_classes());
  if (batch.dim() != bank.dim())
    throw InvalidInput(std::string(op) + ": embedding dim " +
                       std::to_string(batch.dim()) + " != center dim " +
                       std::to_string(bank.dim()));
}

// Normalized copies of the selected center columns plus what the chain rule
// needs. Columns with degenerate norm use the basis-vector fallback and
// propagate no gradient.
struct NormalizedCenters {
  Matrix chat;  // d x k
  VecD norms;
  std::vector<bool> degenerate;
};

NormalizedCenters normalize_columns(const CenterBank& bank,
                                    const std::vector<int>& classes) {
  const int d = bank.dim();
  const int k = static_cast<int>(classes.size());
  NormalizedCenters nc;
  nc.chat = Matrix(d, k);
  nc.norms.resize(k);
  nc.degenerate.resize(k);
  for (int j = 0; j < k; ++j) {
    VecD col = bank.W.col_copy(classes[j]);
    double sq = 0.0;
    for (double x : col) sq += x * x;
    double norm = std::sqrt(sq);
    nc.norms[j] = norm;
    nc.degenerate[j] = norm <= 1e-12;
    VecD unit = kern::l2_normalize(col);
    for (int r = 0; r < d; ++r) nc.chat(r, j) = unit[r];
  }
  return nc;
}

std::vector<int> validate_classes(const CenterBank& bank,
                                  const std::vector<int>& classes,
                                  const char* op) {
  if (classes.empty())
    throw InvalidInput(std::string(op) + ": batch_classes empty");
  std::vector<int> out(classes);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (int c : out)
    if (c < 0 || c >= bank.num_classes())
      throw InvalidInput(std::string(op) + ": class index " +
                         std::to_string(c) + " out of range");
  return out;
}

// Pull a gradient on a normalized column back to the raw column:
// d(c/|c|)/dc applied to g.
void chain_through_normalization(const NormalizedCenters& nc, int j,
                                 const VecD& g_hat, int target_col,
                                 Matrix& grad_centers) {
  if (nc.degenerate[j]) return;
  const int d = nc.chat.rows;
  double proj = 0.0;
  for (int r = 0; r < d; ++r) proj += nc.chat(r, j) * g_hat[r];
  for (int r = 0; r < d; ++r)
    grad_centers(r, target_col) +=
        (g_hat[r] - proj * nc.chat(r, j)) / nc.norms[j];
}

}  // namespace

std::vector<int> batch_class_set(const EmbeddingBatch& batch) {
  std::set<int> s(batch.labels.begin(), batch.labels.end());
  return std::vector<int>(s.begin(), s.end());
}

LossReport softmax_ce(const EmbeddingBatch& batch, const CenterBank& bank) {
  check_dims(batch, bank, "softmax_ce");
  const int B = batch.size();
  const int M = bank.num_classes();

  Matrix logits = kern::matmul(batch.features, bank.W);  // B x M
  Matrix dlogits(B, M);
  VecD per_sample(B);

#pragma omp parallel for
  for (int i = 0; i < B; ++i) {
    const double* z = logits.row(i);
    double mx = z[0];
    for (int j = 1; j < M; ++j) mx = std::max(mx, z[j]);
    double sum = 0.0;
    for (int j = 0; j < M; ++j) sum += std::exp(z[j] - mx);
    double logsum = std::log(sum);
    int y = batch.labels[i];
    per_sample[i] = logsum - (z[y] - mx);
    for (int j = 0; j < M; ++j)
      dlogits(i, j) = (std::exp(z[j] - mx) / sum - (j == y ? 1.0 : 0.0)) / B;
  }

  double loss = 0.0;
  for (int i = 0; i < B; ++i) loss += per_sample[i];
  loss /= B;

  LossReport rep;
  rep.value = loss;
  rep.grad_features = kern::matmul_nt(dlogits, bank.W);   // B x d
  rep.grad_centers = kern::matmul_tn(batch.features, dlogits);  // d x M
  return rep;
}

LossReport triplet_batch_hard(const EmbeddingBatch& batch, double margin) {
  if (batch.size() < 1) throw InvalidInput("triplet_batch_hard: empty batch");
  batch.features.require_finite("triplet_batch_hard.features");
  const int B = batch.size();
  const int d = batch.dim();

  std::vector<int> count_of_label(B, 0);
  {
    std::set<int> distinct(batch.labels.begin(), batch.labels.end());
    if (distinct.size() < 2)
      throw InvalidInput(
          "triplet_batch_hard: batch contains a single class, no negatives "
          "available");
  }
  auto same = [&](int a, int b) { return batch.labels[a] == batch.labels[b]; };

  Matrix d2 = kern::pairwise_sq_dist(batch.features, batch.features);

  struct Mined {
    bool valid = false;   // anchor has >= 1 positive and >= 1 negative
    bool active = false;  // hinge > 0
    int pos = -1, neg = -1;
    double d_ap = 0.0, d_an = 0.0, hinge = 0.0;
  };
  std::vector<Mined> mined(B);

#pragma omp parallel for
  for (int a = 0; a < B; ++a) {
    Mined m;
    double hp = -1.0;
    double hn = -1.0;
    for (int j = 0; j < B; ++j) {
      if (j == a) continue;
      double dist = std::sqrt(d2(a, j));
      if (same(a, j)) {
        if (dist > hp) {
          hp = dist;
          m.pos = j;
        }
      } else {
        if (hn < 0.0 || dist < hn) {
          hn = dist;
          m.neg = j;
        }
      }
    }
    if (m.pos >= 0 && m.neg >= 0) {
      m.valid = true;
      m.d_ap = hp;
      m.d_an = hn;
      m.hinge = margin + hp - hn;
      m.active = m.hinge > 0.0;
    }
    mined[a] = m;
  }

  int n_valid = 0;
  double loss = 0.0;
  for (const Mined& m : mined)
    if (m.valid) {
      ++n_valid;
      loss += std::max(0.0, m.hinge);
    }
  if (n_valid == 0)
    throw InvalidInput(
        "triplet_batch_hard: no valid anchor (every class is a singleton)");
  loss /= n_valid;

  Matrix grad(B, d);
  const double scale = 1.0 / n_valid;
  for (int a = 0; a < B; ++a) {
    const Mined& m = mined[a];
    if (!m.valid || !m.active) continue;
    // d|v_a - v_x| / dv = (v_a - v_x)/dist; subgradient 0 at dist == 0.
    if (m.d_ap > 0.0) {
      for (int k = 0; k < d; ++k) {
        double u =
            (batch.features(a, k) - batch.features(m.pos, k)) / m.d_ap * scale;
        grad(a, k) += u;
        grad(m.pos, k) -= u;
      }
    }
    if (m.d_an > 0.0) {
      for (int k = 0; k < d; ++k) {
        double w =
            (batch.features(a, k) - batch.features(m.neg, k)) / m.d_an * scale;
        grad(a, k) -= w;
        grad(m.neg, k) += w;
      }
    }
  }

  LossReport rep;
  rep.value = loss;
  rep.grad_features = std::move(grad);
  return rep;
}

LossReport l_intra_masked(const EmbeddingBatch& batch, const CenterBank& bank,
                          const SubspaceMask& mask) {
  check_dims(batch, bank, "l_intra_masked");
  if (mask.dim() != bank.dim())
    throw InvalidInput("l_intra_masked: mask length != embedding dim");
  const int B = batch.size();
  const int d = batch.dim();

  VecD per_sample(B, 0.0);
  Matrix grad_f(B, d);
#pragma omp parallel for
  for (int i = 0; i < B; ++i) {
    const int y = batch.labels[i];
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
      if (!mask.bits[k]) continue;
      double diff = batch.features(i, k) - bank.W(k, y);
      s += diff * diff;
      grad_f(i, k) = 2.0 * diff;
    }
    per_sample[i] = s;
  }

  double loss = 0.0;
  for (int i = 0; i < B; ++i) loss += per_sample[i];

  Matrix grad_c(bank.dim(), bank.num_classes());
#pragma omp parallel for
  for (int k = 0; k < d; ++k) {
    if (!mask.bits[k]) continue;
    for (int i = 0; i < B; ++i) {
      double diff = batch.features(i, k) - bank.W(k, batch.labels[i]);
      grad_c(k, batch.labels[i]) -= 2.0 * diff;
    }
  }

  LossReport rep;
  rep.value = loss;
  rep.grad_features = std::move(grad_f);
  rep.grad_centers = std::move(grad_c);
  return rep;
}

LossReport l_intra(const EmbeddingBatch& batch, const CenterBank& bank) {
  return l_intra_masked(batch, bank, SubspaceMask::ones(bank.dim()));
}

LossReport l_inter_orth(const CenterBank& bank,
                        const std::vector<int>& batch_classes, double lambda) {
  std::vector<int> classes = validate_classes(bank, batch_classes,
                                              "l_inter_orth");
  const int d = bank.dim();
  const int k = static_cast<int>(classes.size());

  NormalizedCenters nc = normalize_columns(bank, classes);
  Matrix err = kern::gram(nc.chat);
  for (int i = 0; i < k; ++i) err(i, i) -= 1.0;

  LossReport rep;
  rep.value = lambda * kern::frobenius_sq(err);

  // dL/dChat = 4*lambda*Chat*E for symmetric E.
  Matrix ghat = kern::matmul(nc.chat, err);
  Matrix grad_c(d, bank.num_classes());
  for (int j = 0; j < k; ++j) {
    VecD g(d);
    for (int r = 0; r < d; ++r) g[r] = 4.0 * lambda * ghat(r, j);
    chain_through_normalization(nc, j, g, classes[j], grad_c);
  }
  rep.grad_centers = std::move(grad_c);
  return rep;
}

LossReport l_inter_max(const CenterBank& bank,
                       const std::vector<int>& batch_classes) {
  std::vector<int> classes = validate_classes(bank, batch_classes,
                                              "l_inter_max");
  const int d = bank.dim();
  const int k = static_cast<int>(classes.size());

  NormalizedCenters nc = normalize_columns(bank, classes);
  Matrix err = kern::gram(nc.chat);
  for (int i = 0; i < k; ++i) err(i, i) -= 1.0;

  int bi = 0, bj = 0;
  double best = -1.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (std::abs(err(i, j)) > best) {
        best = std::abs(err(i, j));
        bi = i;
        bj = j;
      }

  LossReport rep;
  rep.value = best;

  Matrix grad_c(d, bank.num_classes());
  double sgn = err(bi, bj) > 0.0 ? 1.0 : (err(bi, bj) < 0.0 ? -1.0 : 0.0);
  if (sgn != 0.0) {
    if (bi == bj) {
      VecD g(d);
      for (int r = 0; r < d; ++r) g[r] = 2.0 * sgn * nc.chat(r, bi);
      chain_through_normalization(nc, bi, g, classes[bi], grad_c);
    } else {
      VecD gi(d), gj(d);
      for (int r = 0; r < d; ++r) {
        gi[r] = sgn * nc.chat(r, bj);
        gj[r] = sgn * nc.chat(r, bi);
      }
      chain_through_normalization(nc, bi, gi, classes[bi], grad_c);
      chain_through_normalization(nc, bj, gj, classes[bj], grad_c);
    }
  }
  rep.grad_centers = std::move(grad_c);
  return rep;
}

LossReport l_inter_euclid(const EmbeddingBatch& batch, const CenterBank& bank,
                          double m, bool exclude_same_class) {
  check_dims(batch, bank, "l_inter_euclid");
  const int B = batch.size();
  const int d = bank.dim();

  // Row i holds the center of sample i's class, so the batch pair loop is a
  // plain pairwise distance over rows.
  Matrix centers_by_sample(B, d);
  for (int i = 0; i < B; ++i)
    for (int r = 0; r < d; ++r)
      centers_by_sample(i, r) = bank.W(r, batch.labels[i]);
  Matrix d2 = kern::pairwise_sq_dist(centers_by_sample, centers_by_sample);

  double loss = 0.0;
  Matrix grad_c(d, bank.num_classes());
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j) {
      if (i == j) continue;
      if (exclude_same_class && batch.labels[i] == batch.labels[j]) continue;
      double dist = std::sqrt(d2(i, j));
      double hinge = m - dist;
      if (hinge <= 0.0) continue;
      loss += hinge;
      if (dist > 0.0) {
        int ya = batch.labels[i];
        int yb = batch.labels[j];
        for (int r = 0; r < d; ++r) {
          double g = (bank.W(r, ya) - bank.W(r, yb)) / dist;
          grad_c(r, ya) -= g;
          grad_c(r, yb) += g;
        }
      }
    }

  LossReport rep;
  rep.value = loss;
  rep.grad_centers = std::move(grad_c);
  return rep;
}

LossReport total_loss(const EmbeddingBatch& batch, const CenterBank& bank,
                      const LossWeights& weights, const SubspaceMask& mask,
                      const std::vector<int>& batch_classes,
                      TotalLossBreakdown* breakdown) {
  weights.validate();

  LossReport total;
  total.grad_features = Matrix(batch.size(), batch.dim());
  total.grad_centers = Matrix(bank.dim(), bank.num_classes());
  TotalLossBreakdown parts{};

  LossReport s = softmax_ce(batch, bank);
  parts.softmax = s.value;
  total.value = s.value;
  axpy(*total.grad_features, 1.0, *s.grad_features);
  axpy(*total.grad_centers, 1.0, *s.grad_centers);

  if (weights.alpha1 > 0.0) {
    LossReport t = triplet_batch_hard(batch, weights.triplet_margin);
    parts.triplet = t.value;
    total.value += weights.alpha1 * t.value;
    axpy(*total.grad_features, weights.alpha1, *t.grad_features);
  }
  if (weights.alpha2 > 0.0) {
    LossReport im = l_intra_masked(batch, bank, mask);
    parts.intra_masked = im.value;
    total.value += weights.alpha2 * im.value;
    axpy(*total.grad_features, weights.alpha2, *im.grad_features);
    axpy(*total.grad_centers, weights.alpha2, *im.grad_centers);
  }
  if (weights.alpha3 > 0.0) {
    LossReport io = l_inter_orth(bank, batch_classes, weights.lambda_orth);
    parts.inter = io.value;
    total.value += weights.alpha3 * io.value;
    axpy(*total.grad_centers, weights.alpha3, *io.grad_centers);
  }

  if (breakdown) *breakdown = parts;
  return total;
}

std::string to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::Bernoulli: return "bernoulli";
    case MaskStrategy::Weighted: return "weighted";
    case MaskStrategy::Hard: return "hard";
  }
  return "bernoulli";
}

MaskStrategy mask_strategy_from_string(const std::string& s) {
  if (s == "bernoulli") return MaskStrategy::Bernoulli;
  if (s == "weighted") return MaskStrategy::Weighted;
  if (s == "hard") return MaskStrategy::Hard;
  throw InvalidConfig("unknown mask strategy '" + s +
                      "' (expected bernoulli|weighted|hard)");
}

}  // namespace ocl
