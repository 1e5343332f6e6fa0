#pragma once

#include "ocl/matrix.hpp"

namespace ocl::kern {

// Serial reference implementations. Kept deliberately plain: the parallel
// kernels below must match them bit-for-bit (same per-entry arithmetic,
// fixed-order accumulation), which the parity tests assert.
namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b);     // (n x k)(k x m)
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T, b is (m x k)
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b, a is (k x n)
Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b);
Matrix gram(const Matrix& c);

void conv2d_forward(const double* in, int in_c, int in_h, int in_w,
                    const double* w, const double* bias, int out_c, int ksize,
                    int stride, int pad, double* out, int out_h, int out_w);
void conv2d_backward_input(const double* gout, int out_c, int out_h, int out_w,
                           const double* w, int in_c, int in_h, int in_w,
                           int ksize, int stride, int pad, double* gin);
void conv2d_backward_params(const double* gout, int out_c, int out_h,
                            int out_w, const double* in, int in_c, int in_h,
                            int in_w, int ksize, int stride, int pad,
                            double* gw, double* gbias);

}  // namespace serial

// OpenMP kernels. Every parallel loop writes disjoint output slots and keeps
// the inner accumulation order identical to the serial reference, so results
// are bit-identical for any thread count.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// Squared Euclidean distances between rows of a (n x d) and rows of b
// (m x d), via the expanded form |a|^2 + |b|^2 - 2ab. Tiny negatives from
// cancellation are clamped to 0 so downstream sqrt stays NaN-free.
Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b);

// G[i][j] = column_i . column_j for c (d x k). Upper triangle computed,
// lower mirrored, so symmetry is exact.
Matrix gram(const Matrix& c);

void conv2d_forward(const double* in, int in_c, int in_h, int in_w,
                    const double* w, const double* bias, int out_c, int ksize,
                    int stride, int pad, double* out, int out_h, int out_w);
void conv2d_backward_input(const double* gout, int out_c, int out_h, int out_w,
                           const double* w, int in_c, int in_h, int in_w,
                           int ksize, int stride, int pad, double* gin);
void conv2d_backward_params(const double* gout, int out_c, int out_h,
                            int out_w, const double* in, int in_c, int in_h,
                            int in_w, int ksize, int stride, int pad,
                            double* gw, double* gbias);

// Scalar helpers, serial by nature (fixed-order folds on small inputs).
double frobenius_sq(const Matrix& m);

// v / |v|. Falls back to the first basis vector when |v| <= 1e-12 so a
// transiently collapsed center cannot poison training.
VecD l2_normalize(const VecD& v);

}  // namespace ocl::kern
