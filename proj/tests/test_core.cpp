#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ocl/kernels.hpp"

using namespace ocl;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("l2_normalize basic cases") {
  VecD v = kern::l2_normalize({3.0, 4.0});
  CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-12));

  VecD e1 = kern::l2_normalize({1.0, 0.0, 0.0});
  CHECK(e1 == VecD{1.0, 0.0, 0.0});

  // degenerate norm falls back to the first basis vector
  CHECK(kern::l2_normalize({0.0, 0.0}) == VecD{1.0, 0.0});
  CHECK(kern::l2_normalize({1e-13, 0.0, 0.0}) == VecD{1.0, 0.0, 0.0});
}

TEST_CASE("l2_normalize result norm and idempotence") {
  Rng rng(42);
  for (int t = 0; t < 50; ++t) {
    VecD v(1 + rng.uniform_int(10));
    for (double& x : v) x = 10.0 * rng.normal();
    VecD u = kern::l2_normalize(v);
    double norm = 0.0;
    for (double x : u) norm += x * x;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    VecD uu = kern::l2_normalize(u);
    for (size_t i = 0; i < u.size(); ++i) CHECK(std::abs(uu[i] - u[i]) < 1e-9);
  }
}

TEST_CASE("l2_normalize rejects non-finite input") {
  CHECK_THROWS_AS(kern::l2_normalize({1.0, NAN}), InvalidInput);
  CHECK_THROWS_AS(kern::l2_normalize({INFINITY, 0.0}), InvalidInput);
  CHECK_THROWS_AS(kern::l2_normalize({}), InvalidInput);
}

TEST_CASE("gram trivial cases") {
  Matrix eye = identity(2);
  Matrix g = kern::gram(eye);
  CHECK(g.data == identity(2).data);

  Matrix dup(2, 2);
  dup(0, 0) = 1.0;
  dup(0, 1) = 1.0;  // two copies of (1,0) as columns
  Matrix g2 = kern::gram(dup);
  for (double x : g2.data) CHECK(x == 1.0);
}

TEST_CASE("gram matches dot-product oracle and is exactly symmetric") {
  Rng rng(7);
  Matrix c = random_matrix(3, 2, rng);
  Matrix g = kern::gram(c);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += c(k, i) * c(k, j);
      CHECK(g(i, j) == doctest::Approx(dot).epsilon(1e-12));
    }

  Matrix big = random_matrix(9, 6, rng);
  Matrix gb = kern::gram(big);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) CHECK(gb(i, j) == gb(j, i));  // bit-identical
}

TEST_CASE("frobenius_sq") {
  CHECK(kern::frobenius_sq(Matrix(3, 3)) == 0.0);

  Matrix m(2, 2);
  m(0, 1) = 1.0;
  m(1, 0) = 1.0;
  CHECK(kern::frobenius_sq(m) == 2.0);

  Rng rng(3);
  Matrix r = random_matrix(4, 4, rng);
  double oracle = 0.0;
  for (double x : r.data) oracle += x * x;
  CHECK(kern::frobenius_sq(r) == doctest::Approx(oracle).epsilon(1e-15));
}

TEST_CASE("pairwise_sq_dist trivial cases") {
  Matrix a(1, 2);
  a(0, 0) = 1.0;
  a(0, 1) = 2.0;
  Matrix d = kern::pairwise_sq_dist(a, a);
  CHECK(d(0, 0) == 0.0);

  Matrix b(2, 2);
  b(1, 0) = 3.0;
  b(1, 1) = 4.0;  // rows (0,0) and (3,4)
  Matrix d2 = kern::pairwise_sq_dist(b, b);
  CHECK(d2(0, 1) == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(d2(1, 0) == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("pairwise_sq_dist matches double-loop oracle") {
  Rng rng(11);
  Matrix a = random_matrix(5, 3, rng);
  Matrix b = random_matrix(4, 3, rng);
  Matrix d = kern::pairwise_sq_dist(a, b);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) {
        double diff = a(i, k) - b(j, k);
        s += diff * diff;
      }
      CHECK(std::abs(d(i, j) - s) < 1e-10);
    }
}

TEST_CASE("pairwise_sq_dist self-distance properties") {
  Rng rng(13);
  Matrix a = random_matrix(8, 5, rng);
  Matrix d = kern::pairwise_sq_dist(a, a);
  for (int i = 0; i < 8; ++i) {
    CHECK(std::abs(d(i, i)) < 1e-9);
    for (int j = 0; j < 8; ++j) {
      CHECK(d(i, j) >= 0.0);
      CHECK(std::abs(d(i, j) - d(j, i)) < 1e-9);
    }
  }
}

TEST_CASE("pairwise_sq_dist dimension mismatch") {
  CHECK_THROWS_AS(kern::pairwise_sq_dist(Matrix(2, 3), Matrix(2, 4)),
                  InvalidInput);
}

TEST_CASE("operations are deterministic") {
  Rng rng(99);
  Matrix a = random_matrix(6, 4, rng);
  Matrix b = random_matrix(5, 4, rng);
  CHECK(kern::pairwise_sq_dist(a, b).data == kern::pairwise_sq_dist(a, b).data);
  CHECK(kern::gram(a).data == kern::gram(a).data);
}

TEST_CASE("rng determinism and serialization round-trip") {
  Rng a(123), b(123);
  for (int t = 0; t < 100; ++t) CHECK(a.uniform01() == b.uniform01());

  std::string state = a.serialize();
  VecD expect;
  for (int t = 0; t < 10; ++t) expect.push_back(a.normal());
  Rng c(0);
  c.deserialize(state);
  for (int t = 0; t < 10; ++t) CHECK(c.normal() == expect[t]);
}

TEST_CASE("rng uniform_int stays in range") {
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) CHECK(rng.uniform_int(7) < 7);
  CHECK_THROWS_AS(rng.uniform_int(0), InvalidInput);
}
