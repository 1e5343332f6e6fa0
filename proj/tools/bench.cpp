// Timing comparison between the OpenMP kernels and their serial references.
// The parity tests assert bit-identical results; this target reports the
// speedup side of the tradeoff.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>

#include "ocl/eval.hpp"
#include "ocl/kernels.hpp"

using namespace ocl;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  auto start = std::chrono::steady_clock::now();
  for (int t = 0; t < reps; ++t) fn();
  auto end = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(end - start).count() / reps;
}

void report(const char* name, double serial_ms, double omp_ms) {
  std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx\n", name,
              serial_ms, omp_ms, serial_ms / omp_ms);
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  const int scale = quick ? 1 : 4;
  const int reps = quick ? 2 : 5;
  Rng rng(7);

  std::printf("threads: %d\n", omp_get_max_threads());

  {
    const int n = 200 * scale, m = 300 * scale, d = 64;
    Matrix a = random_matrix(n, d, rng);
    Matrix b = random_matrix(m, d, rng);
    double s = time_ms([&] { kern::serial::pairwise_sq_dist(a, b); }, reps);
    double p = time_ms([&] { kern::pairwise_sq_dist(a, b); }, reps);
    report("pairwise_sq_dist", s, p);
  }
  {
    const int n = 96 * scale;
    Matrix a = random_matrix(n, n, rng);
    Matrix b = random_matrix(n, n, rng);
    double s = time_ms([&] { kern::serial::matmul(a, b); }, reps);
    double p = time_ms([&] { kern::matmul(a, b); }, reps);
    report("matmul", s, p);
  }
  {
    Matrix c = random_matrix(128, 64 * scale, rng);
    double s = time_ms([&] { kern::serial::gram(c); }, reps);
    double p = time_ms([&] { kern::gram(c); }, reps);
    report("gram", s, p);
  }
  {
    const int in_c = 8, out_c = 16, hw = 16 * scale;
    VecD in(static_cast<size_t>(in_c) * hw * hw);
    VecD w(static_cast<size_t>(out_c) * in_c * 9);
    VecD bias(out_c, 0.0);
    for (double& v : in) v = rng.normal();
    for (double& v : w) v = rng.normal();
    VecD out(static_cast<size_t>(out_c) * hw * hw);
    double s = time_ms(
        [&] {
          kern::serial::conv2d_forward(in.data(), in_c, hw, hw, w.data(),
                                       bias.data(), out_c, 3, 1, 1, out.data(),
                                       hw, hw);
        },
        reps);
    double p = time_ms(
        [&] {
          kern::conv2d_forward(in.data(), in_c, hw, hw, w.data(), bias.data(),
                               out_c, 3, 1, 1, out.data(), hw, hw);
        },
        reps);
    report("conv2d_forward", s, p);
  }
  {
    // retrieval evaluation fans out across queries inside evaluate()
    const int nq = 100 * scale, ng = 500 * scale, d = 32;
    GallerySet queries{random_matrix(nq, d, rng), {}, {}};
    GallerySet gallery{random_matrix(ng, d, rng), {}, {}};
    for (int i = 0; i < nq; ++i) {
      queries.ids.push_back(i % 50);
      queries.cameras.push_back(-1);
    }
    for (int i = 0; i < ng; ++i) {
      gallery.ids.push_back(i % 50);
      gallery.cameras.push_back(-1);
    }
    int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    double s = time_ms([&] { evaluate(queries, gallery, 10); }, reps);
    omp_set_num_threads(saved);
    double p = time_ms([&] { evaluate(queries, gallery, 10); }, reps);
    report("evaluate (1 thread vs max)", s, p);
  }
  return 0;
}
