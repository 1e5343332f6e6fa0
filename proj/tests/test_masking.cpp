#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ocl/losses.hpp"
#include "ocl/masking.hpp"

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

}  // namespace

TEST_CASE("per_unit_intra_dist trivial and oracle") {
  Rng rng(1);
  CenterBank bank = random_bank(4, 2, rng);

  EmbeddingBatch at_centers;
  at_centers.features = Matrix(2, 4);
  at_centers.labels = {0, 1};
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 4; ++k)
      at_centers.features(i, k) = bank.W(k, at_centers.labels[i]);
  for (double u : per_unit_intra_dist(at_centers, bank)) CHECK(u == 0.0);

  // B=1, v - c = (1, 2) componentwise -> (1, 4)
  CenterBank origin;
  origin.W = Matrix(2, 1);
  EmbeddingBatch single;
  single.features = Matrix(1, 2);
  single.features(0, 0) = 1.0;
  single.features(0, 1) = 2.0;
  single.labels = {0};
  VecD u = per_unit_intra_dist(single, origin);
  CHECK(u[0] == doctest::Approx(1.0));
  CHECK(u[1] == doctest::Approx(4.0));

  // coordinate sums match a loop oracle, and sum to l_intra
  EmbeddingBatch batch = random_batch(6, 5, 3, rng);
  CenterBank b2 = random_bank(5, 3, rng);
  VecD dist = per_unit_intra_dist(batch, b2);
  double total = 0.0;
  for (int k = 0; k < 5; ++k) {
    double s = 0.0;
    for (int i = 0; i < 6; ++i) {
      double diff = batch.features(i, k) - b2.W(k, batch.labels[i]);
      s += diff * diff;
    }
    CHECK(dist[k] == doctest::Approx(s).epsilon(1e-12));
    CHECK(dist[k] >= 0.0);
    total += dist[k];
  }
  CHECK(std::abs(total - l_intra(batch, b2).value) < 1e-9);
}

TEST_CASE("sample_bernoulli degenerate p") {
  Rng rng(2);
  MaskConfig cfg;
  cfg.p = 1.0;
  SubspaceMask ones = sample_bernoulli(cfg, 16, rng);
  CHECK(ones.popcount() == 16);

  cfg.p = 0.0;
  SubspaceMask zeros = sample_bernoulli(cfg, 16, rng);
  CHECK(zeros.popcount() == 0);
}

TEST_CASE("sample_bernoulli popcount concentrates around p*d") {
  MaskConfig cfg;
  cfg.p = 0.5;
  int outliers = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    Rng rng(1000 + t);
    int pop = sample_bernoulli(cfg, 10000, rng).popcount();
    if (pop < 4800 || pop > 5200) ++outliers;
  }
  // binomial tail: |pop - 5000| > 200 is a 4-sigma event
  CHECK(outliers <= trials / 100);
}

TEST_CASE("sample_weighted cardinality and certainty case") {
  Rng rng(3);
  MaskConfig cfg;
  cfg.p = 1.0;
  SubspaceMask all = sample_weighted(cfg, {0.0, 5.0, 1.0, 0.0}, rng);
  CHECK(all.popcount() == 4);

  cfg.p = 0.25;
  for (int t = 0; t < 20; ++t) {
    SubspaceMask m = sample_weighted(cfg, {1.0, 0.0, 0.0, 0.0}, rng);
    CHECK(m.bits[0] == 1);
    CHECK(m.popcount() == 1);
  }

  // exact cardinality for arbitrary weights, including all-zero fallback
  cfg.p = 0.5;
  for (int t = 0; t < 20; ++t) {
    VecD w(9);
    for (double& x : w) x = rng.uniform01();
    CHECK(sample_weighted(cfg, w, rng).popcount() == 5);  // round(4.5) = 5
    CHECK(sample_weighted(cfg, VecD(9, 0.0), rng).popcount() == 5);
  }
}

TEST_CASE("sample_weighted frequency follows the weights") {
  MaskConfig cfg;
  cfg.p = 0.5;
  Rng rng(17);
  int unit0 = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t)
    unit0 += sample_weighted(cfg, {3.0, 1.0}, rng).bits[0];
  double freq = static_cast<double>(unit0) / trials;
  CHECK(freq > 0.73);
  CHECK(freq < 0.77);
}

TEST_CASE("sample_hard top-k selection") {
  MaskConfig cfg;
  cfg.p = 1.0;
  CHECK(sample_hard(cfg, {1.0, 2.0, 3.0}).popcount() == 3);

  cfg.p = 0.5;
  SubspaceMask m = sample_hard(cfg, {5.0, 1.0, 9.0, 2.0});
  CHECK(m.bits == std::vector<uint8_t>{1, 0, 1, 0});

  // ties break toward the lowest index
  SubspaceMask t = sample_hard(cfg, {2.0, 2.0, 2.0, 2.0});
  CHECK(t.bits == std::vector<uint8_t>{1, 1, 0, 0});
}

TEST_CASE("sample_hard matches full-sort oracle") {
  Rng rng(4);
  MaskConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 3 + static_cast<int>(rng.uniform_int(20));
    cfg.p = rng.uniform01();
    VecD w(d);
    for (double& x : w) x = rng.uniform01() * 10.0;
    SubspaceMask m = sample_hard(cfg, w);

    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return w[a] > w[b]; });
    const int n = static_cast<int>(std::llround(cfg.p * d));
    CHECK(m.popcount() == n);
    std::vector<uint8_t> expect(d, 0);
    for (int t = 0; t < n; ++t) expect[order[t]] = 1;
    CHECK(m.bits == expect);
  }
}

TEST_CASE("masks are byte-identical under identical seed and config") {
  MaskConfig cfg;
  cfg.p = 0.37;
  Rng a(99), b(99);
  for (int t = 0; t < 20; ++t)
    CHECK(sample_bernoulli(cfg, 32, a).bits ==
          sample_bernoulli(cfg, 32, b).bits);

  Rng c(5), d(5);
  VecD w = {1.0, 2.0, 0.5, 4.0, 0.0, 2.5};
  cfg.p = 0.5;
  for (int t = 0; t < 20; ++t)
    CHECK(sample_weighted(cfg, w, c).bits == sample_weighted(cfg, w, d).bits);
}

TEST_CASE("bernoulli masked-loss expectation approaches p * l_intra") {
  // smaller copy of the acceptance property, as a quick regression
  Rng rng(6);
  EmbeddingBatch batch = random_batch(8, 16, 4, rng);
  CenterBank bank = random_bank(16, 4, rng);
  const double full = l_intra(batch, bank).value;

  MaskConfig cfg;
  cfg.p = 0.5;
  Rng mask_rng(7);
  double mean = 0.0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t)
    mean += l_intra_masked(batch, bank, sample_bernoulli(cfg, 16, mask_rng))
                .value;
  mean /= trials;
  CHECK(std::abs(mean - cfg.p * full) < 0.05 * cfg.p * full);
}

TEST_CASE("invalid p rejected") {
  Rng rng(8);
  MaskConfig cfg;
  cfg.p = 1.5;
  CHECK_THROWS_AS(sample_bernoulli(cfg, 4, rng), InvalidInput);
  CHECK_THROWS_AS(sample_hard(cfg, {1.0, 2.0}), InvalidInput);
  cfg.p = 0.5;
  CHECK_THROWS_AS(sample_weighted(cfg, {1.0, -0.5}, rng), InvalidInput);
}
