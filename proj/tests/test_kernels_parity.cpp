// The OpenMP kernels must match the serial references bit-for-bit at every
// thread count: parallel loops write disjoint slots and keep the serial
// accumulation order.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <omp.h>

#include "ocl/kernels.hpp"

using namespace ocl;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

struct ThreadGuard {
  int saved;
  explicit ThreadGuard(int n) : saved(omp_get_max_threads()) {
    omp_set_num_threads(n);
  }
  ~ThreadGuard() { omp_set_num_threads(saved); }
};

}  // namespace

TEST_CASE("matmul variants match serial bit-for-bit") {
  Rng rng(31);
  Matrix a = random_matrix(17, 23, rng);
  Matrix b = random_matrix(23, 11, rng);
  Matrix bt = random_matrix(11, 23, rng);
  Matrix c = random_matrix(17, 9, rng);

  Matrix mm = kern::serial::matmul(a, b);
  Matrix nt = kern::serial::matmul_nt(a, bt);
  Matrix tn = kern::serial::matmul_tn(a, c);

  for (int threads : {1, 2, 3, 4}) {
    ThreadGuard g(threads);
    CHECK(kern::matmul(a, b).data == mm.data);
    CHECK(kern::matmul_nt(a, bt).data == nt.data);
    CHECK(kern::matmul_tn(a, c).data == tn.data);
  }
}

TEST_CASE("pairwise_sq_dist and gram match serial bit-for-bit") {
  Rng rng(32);
  Matrix a = random_matrix(29, 13, rng);
  Matrix b = random_matrix(21, 13, rng);
  Matrix chat = random_matrix(13, 19, rng);

  Matrix pd = kern::serial::pairwise_sq_dist(a, b);
  Matrix gr = kern::serial::gram(chat);

  for (int threads : {1, 2, 3, 4}) {
    ThreadGuard g(threads);
    CHECK(kern::pairwise_sq_dist(a, b).data == pd.data);
    CHECK(kern::gram(chat).data == gr.data);
  }
}

TEST_CASE("conv2d forward/backward match serial bit-for-bit") {
  Rng rng(33);
  const int in_c = 3, in_h = 9, in_w = 7, out_c = 5, k = 3, pad = 1;

  for (int stride : {1, 2}) {
    const int out_h = (in_h + 2 * pad - k) / stride + 1;
    const int out_w = (in_w + 2 * pad - k) / stride + 1;

    VecD in(static_cast<size_t>(in_c) * in_h * in_w);
    VecD w(static_cast<size_t>(out_c) * in_c * k * k);
    VecD bias(out_c);
    VecD gout(static_cast<size_t>(out_c) * out_h * out_w);
    for (double& v : in) v = rng.normal();
    for (double& v : w) v = rng.normal();
    for (double& v : bias) v = rng.normal();
    for (double& v : gout) v = rng.normal();

    VecD fwd_ref(gout.size());
    kern::serial::conv2d_forward(in.data(), in_c, in_h, in_w, w.data(),
                                 bias.data(), out_c, k, stride, pad,
                                 fwd_ref.data(), out_h, out_w);
    VecD gin_ref(in.size());
    kern::serial::conv2d_backward_input(gout.data(), out_c, out_h, out_w,
                                        w.data(), in_c, in_h, in_w, k, stride,
                                        pad, gin_ref.data());
    VecD gw_ref(w.size(), 0.0), gb_ref(out_c, 0.0);
    kern::serial::conv2d_backward_params(gout.data(), out_c, out_h, out_w,
                                         in.data(), in_c, in_h, in_w, k,
                                         stride, pad, gw_ref.data(),
                                         gb_ref.data());

    for (int threads : {1, 2, 4}) {
      ThreadGuard g(threads);
      VecD fwd(gout.size());
      kern::conv2d_forward(in.data(), in_c, in_h, in_w, w.data(), bias.data(),
                           out_c, k, stride, pad, fwd.data(), out_h, out_w);
      CHECK(fwd == fwd_ref);

      VecD gin(in.size());
      kern::conv2d_backward_input(gout.data(), out_c, out_h, out_w, w.data(),
                                  in_c, in_h, in_w, k, stride, pad,
                                  gin.data());
      CHECK(gin == gin_ref);

      VecD gw(w.size(), 0.0), gb(out_c, 0.0);
      kern::conv2d_backward_params(gout.data(), out_c, out_h, out_w, in.data(),
                                   in_c, in_h, in_w, k, stride, pad, gw.data(),
                                   gb.data());
      CHECK(gw == gw_ref);
      CHECK(gb == gb_ref);
    }
  }
}
