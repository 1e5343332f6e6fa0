#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ocl/kernels.hpp"
#include "ocl/losses.hpp"

using namespace ocl;

namespace {

EmbeddingBatch random_batch(int B, int d, int num_labels, Rng& rng) {
  EmbeddingBatch b;
  b.features = Matrix(B, d);
  for (double& v : b.features.data) v = rng.normal();
  b.labels.resize(B);
  for (int i = 0; i < B; ++i) b.labels[i] = i % num_labels;
  return b;
}

CenterBank random_bank(int d, int M, Rng& rng) {
  CenterBank bank;
  bank.W = Matrix(d, M);
  for (double& v : bank.W.data) v = rng.normal();
  return bank;
}

double euclid(const Matrix& f, int i, int j) {
  double s = 0.0;
  for (int k = 0; k < f.cols; ++k) {
    double diff = f(i, k) - f(j, k);
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("softmax_ce symmetric logits give ln M") {
  // equal columns -> uniform softmax regardless of the input
  Rng rng(1);
  CenterBank bank;
  bank.W = Matrix(3, 2);
  for (int r = 0; r < 3; ++r) bank.W(r, 0) = bank.W(r, 1) = rng.normal();
  EmbeddingBatch batch = random_batch(4, 3, 2, rng);
  LossReport rep = softmax_ce(batch, bank);
  CHECK(rep.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  CenterBank zero;
  zero.W = Matrix(5, 4);
  EmbeddingBatch b2 = random_batch(3, 5, 2, rng);
  CHECK(softmax_ce(b2, zero).value ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("softmax_ce value matches naive oracle") {
  Rng rng(2);
  EmbeddingBatch batch = random_batch(4, 3, 3, rng);
  CenterBank bank = random_bank(3, 5, rng);
  LossReport rep = softmax_ce(batch, bank);

  double oracle = 0.0;
  for (int i = 0; i < 4; ++i) {
    VecD z(5, 0.0);
    for (int j = 0; j < 5; ++j)
      for (int k = 0; k < 3; ++k) z[j] += batch.features(i, k) * bank.W(k, j);
    double denom = 0.0;
    for (double zj : z) denom += std::exp(zj);
    oracle += -std::log(std::exp(z[batch.labels[i]]) / denom);
  }
  oracle /= 4.0;
  CHECK(rep.value == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(rep.value >= 0.0);
  CHECK(rep.grad_features.has_value());
  CHECK(rep.grad_centers.has_value());
}

TEST_CASE("softmax_ce rejects out-of-range labels") {
  Rng rng(3);
  EmbeddingBatch batch = random_batch(2, 3, 2, rng);
  batch.labels[1] = 7;
  CenterBank bank = random_bank(3, 4, rng);
  CHECK_THROWS_AS(softmax_ce(batch, bank), InvalidInput);
}

TEST_CASE("triplet_batch_hard trivial values") {
  // all embeddings identical: loss equals the margin
  EmbeddingBatch same;
  same.features = Matrix(4, 3, 1.5);
  same.labels = {0, 0, 1, 1};
  CHECK(triplet_batch_hard(same, 0.3).value == doctest::Approx(0.3));

  // two tight classes far apart: margin satisfied
  EmbeddingBatch split;
  split.features = Matrix(4, 2);
  split.features(2, 0) = 10.0;
  split.features(3, 0) = 10.0;
  split.labels = {0, 0, 1, 1};
  CHECK(triplet_batch_hard(split, 0.3).value == 0.0);
}

TEST_CASE("triplet_batch_hard matches exhaustive-enumeration oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    EmbeddingBatch batch = random_batch(8, 4, 4, rng);  // 4 ids x 2
    LossReport rep = triplet_batch_hard(batch, 0.3);

    // oracle: per anchor, max over all (positive, negative) pairs
    double oracle = 0.0;
    int anchors = 0;
    for (int a = 0; a < 8; ++a) {
      double worst = -1e300;
      bool any = false;
      for (int p = 0; p < 8; ++p) {
        if (p == a || batch.labels[p] != batch.labels[a]) continue;
        for (int n = 0; n < 8; ++n) {
          if (batch.labels[n] == batch.labels[a]) continue;
          any = true;
          worst = std::max(worst,
                           0.3 + euclid(batch.features, a, p) -
                               euclid(batch.features, a, n));
        }
      }
      if (any) {
        ++anchors;
        oracle += std::max(0.0, worst);
      }
    }
    oracle /= anchors;
    CHECK(rep.value == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(rep.value >= 0.0);
  }
}

TEST_CASE("triplet_batch_hard error paths") {
  Rng rng(5);
  EmbeddingBatch one_class = random_batch(4, 3, 1, rng);
  CHECK_THROWS_AS(triplet_batch_hard(one_class, 0.3), InvalidInput);

  // all classes singleton: negatives exist but no anchor has a positive
  EmbeddingBatch singletons = random_batch(3, 3, 3, rng);
  CHECK_THROWS_AS(triplet_batch_hard(singletons, 0.3), InvalidInput);

  // singleton classes are skipped as anchors but do not break the batch
  EmbeddingBatch mixed = random_batch(5, 3, 2, rng);
  mixed.labels = {0, 0, 1, 1, 2};
  CHECK_NOTHROW(triplet_batch_hard(mixed, 0.3));
}

TEST_CASE("l_intra trivial and oracle") {
  Rng rng(6);
  CenterBank bank = random_bank(4, 3, rng);

  // samples exactly at their centers
  EmbeddingBatch at_centers;
  at_centers.features = Matrix(3, 4);
  at_centers.labels = {2, 0, 1};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k)
      at_centers.features(i, k) = bank.W(k, at_centers.labels[i]);
  CHECK(l_intra(at_centers, bank).value == 0.0);

  // single sample at unit offset
  CenterBank origin;
  origin.W = Matrix(2, 1);
  EmbeddingBatch single;
  single.features = Matrix(1, 2);
  single.features(0, 0) = 1.0;
  single.labels = {0};
  CHECK(l_intra(single, origin).value == doctest::Approx(1.0));

  // random instance vs direct summation + gradient formulas
  EmbeddingBatch batch = random_batch(6, 5, 3, rng);
  CenterBank b2 = random_bank(5, 3, rng);
  LossReport rep = l_intra(batch, b2);
  double oracle = 0.0;
  for (int i = 0; i < 6; ++i)
    for (int k = 0; k < 5; ++k) {
      double diff = batch.features(i, k) - b2.W(k, batch.labels[i]);
      oracle += diff * diff;
    }
  CHECK(std::abs(rep.value - oracle) < 1e-10);
  for (int i = 0; i < 6; ++i)
    for (int k = 0; k < 5; ++k) {
      double diff = batch.features(i, k) - b2.W(k, batch.labels[i]);
      CHECK((*rep.grad_features)(i, k) == doctest::Approx(2.0 * diff));
    }
  // center column y accumulates -2 (v - c_y)
  for (int y = 0; y < 3; ++y)
    for (int k = 0; k < 5; ++k) {
      double expect = 0.0;
      for (int i = 0; i < 6; ++i)
        if (batch.labels[i] == y)
          expect -= 2.0 * (batch.features(i, k) - b2.W(k, y));
      CHECK((*rep.grad_centers)(k, y) == doctest::Approx(expect));
    }
}

TEST_CASE("l_intra_masked subset, all-ones, all-zeros") {
  Rng rng(7);
  EmbeddingBatch batch = random_batch(2, 4, 2, rng);
  CenterBank bank = random_bank(4, 2, rng);

  SubspaceMask m;
  m.bits = {1, 0, 1, 0};
  LossReport masked = l_intra_masked(batch, bank, m);
  double oracle = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int k : {0, 2}) {
      double diff = batch.features(i, k) - bank.W(k, batch.labels[i]);
      oracle += diff * diff;
    }
  CHECK(masked.value == doctest::Approx(oracle).epsilon(1e-12));

  // all-ones mask is bit-for-bit l_intra
  LossReport full = l_intra_masked(batch, bank, SubspaceMask::ones(4));
  LossReport plain = l_intra(batch, bank);
  CHECK(full.value == plain.value);
  CHECK(full.grad_features->data == plain.grad_features->data);
  CHECK(full.grad_centers->data == plain.grad_centers->data);

  // all-zero mask is legal: zero loss, zero gradients
  SubspaceMask zero;
  zero.bits = {0, 0, 0, 0};
  LossReport none = l_intra_masked(batch, bank, zero);
  CHECK(none.value == 0.0);
  for (double g : none.grad_features->data) CHECK(g == 0.0);
  for (double g : none.grad_centers->data) CHECK(g == 0.0);

  // masked gradients are the plain ones zeroed on masked units
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 4; ++k)
      CHECK((*masked.grad_features)(i, k) ==
            (m.bits[k] ? (*plain.grad_features)(i, k) : 0.0));
}

TEST_CASE("l_inter_orth trivial values") {
  CenterBank ortho;
  ortho.W = Matrix(2, 2);
  ortho.W(0, 0) = 1.0;
  ortho.W(1, 1) = 1.0;
  CHECK(l_inter_orth(ortho, {0, 1}, 1.0).value ==
        doctest::Approx(0.0).epsilon(1e-12));

  CenterBank dup;
  dup.W = Matrix(3, 2);
  dup.W(0, 0) = 1.0;
  dup.W(0, 1) = 1.0;
  CHECK(l_inter_orth(dup, {0, 1}, 1.0).value == doctest::Approx(2.0));
  CHECK(l_inter_orth(dup, {0, 1}, 0.7).value == doctest::Approx(1.4));
}

TEST_CASE("l_inter_orth matches normalize-gram-frobenius composition") {
  Rng rng(8);
  CenterBank bank = random_bank(6, 7, rng);
  std::vector<int> classes = {0, 2, 3, 6};
  const double lambda = 0.5;
  LossReport rep = l_inter_orth(bank, classes, lambda);

  Matrix chat(6, 4);
  for (int j = 0; j < 4; ++j) {
    VecD u = kern::l2_normalize(bank.W.col_copy(classes[j]));
    for (int r = 0; r < 6; ++r) chat(r, j) = u[r];
  }
  Matrix err = kern::gram(chat);
  for (int i = 0; i < 4; ++i) err(i, i) -= 1.0;
  CHECK(rep.value ==
        doctest::Approx(lambda * kern::frobenius_sq(err)).epsilon(1e-12));

  // gradient present only on batch-class columns
  for (int j = 0; j < 7; ++j) {
    bool in_batch = std::find(classes.begin(), classes.end(), j) !=
                    classes.end();
    double mag = 0.0;
    for (int r = 0; r < 6; ++r) mag += std::abs((*rep.grad_centers)(r, j));
    if (!in_batch) CHECK(mag == 0.0);
  }
}

TEST_CASE("l_inter_orth is zero iff normalized columns are orthogonal") {
  Rng rng(9);
  // construct an exactly orthogonal pair scaled arbitrarily
  CenterBank bank;
  bank.W = Matrix(4, 3);
  bank.W(0, 0) = 3.0;
  bank.W(1, 1) = -0.25;
  bank.W(2, 2) = 7.0;
  bank.W(3, 2) = 0.0;
  CHECK(l_inter_orth(bank, {0, 1, 2}, 1.0).value < 1e-9);

  CenterBank corr = random_bank(4, 3, rng);
  CHECK(l_inter_orth(corr, {0, 1, 2}, 1.0).value > 1e-9);
}

TEST_CASE("l_inter_orth invariant to positive column rescaling") {
  Rng rng(10);
  CenterBank bank = random_bank(5, 4, rng);
  std::vector<int> classes = {0, 1, 2, 3};
  double before = l_inter_orth(bank, classes, 1.0).value;
  for (int r = 0; r < 5; ++r) bank.W(r, 2) *= 7.3;
  double after = l_inter_orth(bank, classes, 1.0).value;
  CHECK(std::abs(before - after) < 1e-9);
}

TEST_CASE("l_inter_orth does not mutate the bank") {
  Rng rng(11);
  CenterBank bank = random_bank(4, 3, rng);
  VecD before = bank.W.data;
  l_inter_orth(bank, {0, 1, 2}, 1.0);
  CHECK(bank.W.data == before);
}

TEST_CASE("l_inter_max trivial and enumeration oracle") {
  CenterBank ortho;
  ortho.W = Matrix(2, 2);
  ortho.W(0, 0) = 1.0;
  ortho.W(1, 1) = 1.0;
  CHECK(l_inter_max(ortho, {0, 1}).value == doctest::Approx(0.0));

  CenterBank dup;
  dup.W = Matrix(3, 2);
  dup.W(1, 0) = 2.0;
  dup.W(1, 1) = 5.0;  // same direction, different scales
  CHECK(l_inter_max(dup, {0, 1}).value == doctest::Approx(1.0));

  Rng rng(12);
  CenterBank bank = random_bank(5, 3, rng);
  std::vector<int> classes = {0, 1, 2};
  double oracle = 0.0;
  Matrix chat(5, 3);
  for (int j = 0; j < 3; ++j) {
    VecD u = kern::l2_normalize(bank.W.col_copy(j));
    for (int r = 0; r < 5; ++r) chat(r, j) = u[r];
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int r = 0; r < 5; ++r) dot += chat(r, i) * chat(r, j);
      if (i == j) dot -= 1.0;
      oracle = std::max(oracle, std::abs(dot));
    }
  CHECK(l_inter_max(bank, classes).value ==
        doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("l_inter_euclid trivial values and oracle") {
  Rng rng(13);

  // one class, three samples: 6 ordered pairs, each contributing m
  CenterBank bank = random_bank(3, 2, rng);
  EmbeddingBatch same;
  same.features = Matrix(3, 3);
  same.labels = {0, 0, 0};
  CHECK(l_inter_euclid(same, bank, 1.0).value == doctest::Approx(6.0));
  // exclusion flag removes same-class pairs entirely
  CHECK(l_inter_euclid(same, bank, 1.0, true).value == 0.0);

  // two classes with distant centers: hinge satisfied
  CenterBank far;
  far.W = Matrix(2, 2);
  far.W(0, 1) = 5.0;
  EmbeddingBatch two;
  two.features = Matrix(2, 2);
  two.labels = {0, 1};
  CHECK(l_inter_euclid(two, far, 1.0, true).value == 0.0);

  // random instance vs double loop
  EmbeddingBatch batch = random_batch(5, 3, 3, rng);
  CenterBank b2 = random_bank(3, 3, rng);
  const double m = 3.0;
  LossReport rep = l_inter_euclid(batch, b2, m);
  double oracle = 0.0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      if (i == j) continue;
      double s = 0.0;
      for (int r = 0; r < 3; ++r) {
        double diff = b2.W(r, batch.labels[i]) - b2.W(r, batch.labels[j]);
        s += diff * diff;
      }
      oracle += std::max(0.0, m - std::sqrt(s));
    }
  CHECK(rep.value == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("total_loss degenerate weights equal softmax exactly") {
  Rng rng(14);
  EmbeddingBatch batch = random_batch(6, 4, 3, rng);
  CenterBank bank = random_bank(4, 3, rng);
  LossWeights w;
  w.alpha1 = w.alpha2 = w.alpha3 = 0.0;
  LossReport total = total_loss(batch, bank, w, SubspaceMask::ones(4),
                                batch_class_set(batch));
  LossReport sm = softmax_ce(batch, bank);
  CHECK(total.value == sm.value);
  CHECK(total.grad_features->data == sm.grad_features->data);
  CHECK(total.grad_centers->data == sm.grad_centers->data);
}

TEST_CASE("total_loss equals hand-summed components within 1e-12") {
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    EmbeddingBatch batch = random_batch(6, 4, 3, rng);
    CenterBank bank = random_bank(4, 5, rng);
    SubspaceMask mask;
    mask.bits.resize(4);
    for (int k = 0; k < 4; ++k) mask.bits[k] = rng.bernoulli(0.5) ? 1 : 0;
    std::vector<int> classes = batch_class_set(batch);

    LossWeights w;
    w.alpha1 = 1.0;
    w.alpha2 = 0.5;
    w.alpha3 = 0.005;
    TotalLossBreakdown parts{};
    LossReport total = total_loss(batch, bank, w, mask, classes, &parts);

    double sum = softmax_ce(batch, bank).value +
                 w.alpha1 * triplet_batch_hard(batch, w.triplet_margin).value +
                 w.alpha2 * l_intra_masked(batch, bank, mask).value +
                 w.alpha3 * l_inter_orth(bank, classes, w.lambda_orth).value;
    CHECK(std::abs(total.value - sum) <= 1e-12 * std::max(1.0, sum));
    CHECK(parts.softmax == softmax_ce(batch, bank).value);

    // gradients equal the weighted sums entrywise
    LossReport sm = softmax_ce(batch, bank);
    LossReport tr = triplet_batch_hard(batch, w.triplet_margin);
    LossReport im = l_intra_masked(batch, bank, mask);
    LossReport io = l_inter_orth(bank, classes, w.lambda_orth);
    for (size_t i = 0; i < total.grad_features->data.size(); ++i) {
      double expect = sm.grad_features->data[i] +
                      w.alpha1 * tr.grad_features->data[i] +
                      w.alpha2 * im.grad_features->data[i];
      CHECK(std::abs(total.grad_features->data[i] - expect) <= 1e-12);
    }
    for (size_t i = 0; i < total.grad_centers->data.size(); ++i) {
      double expect = sm.grad_centers->data[i] +
                      w.alpha2 * im.grad_centers->data[i] +
                      w.alpha3 * io.grad_centers->data[i];
      CHECK(std::abs(total.grad_centers->data[i] - expect) <= 1e-12);
    }
  }
}

TEST_CASE("all losses are non-negative on random instances") {
  Rng rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    EmbeddingBatch batch = random_batch(6, 5, 3, rng);
    CenterBank bank = random_bank(5, 4, rng);
    std::vector<int> classes = batch_class_set(batch);
    SubspaceMask mask;
    mask.bits.assign(5, 1);
    CHECK(softmax_ce(batch, bank).value >= 0.0);
    CHECK(triplet_batch_hard(batch, 0.3).value >= 0.0);
    CHECK(l_intra(batch, bank).value >= 0.0);
    CHECK(l_intra_masked(batch, bank, mask).value >= 0.0);
    CHECK(l_inter_orth(bank, classes, 1.0).value >= 0.0);
    CHECK(l_inter_max(bank, classes).value >= 0.0);
    CHECK(l_inter_euclid(batch, bank, 1.0).value >= 0.0);
  }
}

TEST_CASE("zero-weight components never run (single-class batch works)") {
  Rng rng(17);
  EmbeddingBatch batch = random_batch(3, 4, 1, rng);  // triplet would throw
  CenterBank bank = random_bank(4, 2, rng);
  LossWeights w;
  w.alpha1 = 0.0;
  CHECK_NOTHROW(total_loss(batch, bank, w, SubspaceMask::ones(4),
                           batch_class_set(batch)));
}
