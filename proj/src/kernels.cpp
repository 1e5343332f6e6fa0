#include "ocl/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace ocl::kern {

namespace {

void check_mul(const Matrix& a, const Matrix& b, int ak, int bk,
               const char* name) {
  int adim = (ak == 1) ? a.cols : a.rows;
  int bdim = (bk == 1) ? b.rows : b.cols;
  if (adim != bdim)
    throw InvalidInput(std::string(name) + ": inner dimension mismatch");
}

inline double dot_rows(const double* x, const double* y, int n) {
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += x[k] * y[k];
  return s;
}

}  // namespace

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_mul(a, b, 1, 1, "matmul");
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_mul(a, b, 1, 0, "matmul_nt");
  Matrix out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.rows; ++j)
      out(i, j) = dot_rows(a.row(i), b.row(j), a.cols);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_mul(a, b, 0, 1, "matmul_tn");
  Matrix out(a.cols, b.cols);
  for (int i = 0; i < a.cols; ++i)
    for (int j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (int k = 0; k < a.rows; ++k) s += a(k, i) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols)
    throw InvalidInput("pairwise_sq_dist: feature dimension mismatch");
  VecD na(a.rows), nb(b.rows);
  for (int i = 0; i < a.rows; ++i) na[i] = dot_rows(a.row(i), a.row(i), a.cols);
  for (int j = 0; j < b.rows; ++j) nb[j] = dot_rows(b.row(j), b.row(j), b.cols);
  Matrix out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.rows; ++j) {
      double d = na[i] + nb[j] - 2.0 * dot_rows(a.row(i), b.row(j), a.cols);
      out(i, j) = d < 0.0 ? 0.0 : d;
    }
  return out;
}

Matrix gram(const Matrix& c) {
  Matrix out(c.cols, c.cols);
  for (int i = 0; i < c.cols; ++i)
    for (int j = i; j < c.cols; ++j) {
      double s = 0.0;
      for (int k = 0; k < c.rows; ++k) s += c(k, i) * c(k, j);
      out(i, j) = s;
      out(j, i) = s;
    }
  return out;
}

void conv2d_forward(const double* in, int in_c, int in_h, int in_w,
                    const double* w, const double* bias, int out_c, int ksize,
                    int stride, int pad, double* out, int out_h, int out_w) {
  for (int oc = 0; oc < out_c; ++oc)
    for (int oh = 0; oh < out_h; ++oh)
      for (int ow = 0; ow < out_w; ++ow) {
        double s = bias[oc];
        for (int ic = 0; ic < in_c; ++ic)
          for (int kh = 0; kh < ksize; ++kh)
            for (int kw = 0; kw < ksize; ++kw) {
              int ih = oh * stride - pad + kh;
              int iw = ow * stride - pad + kw;
              if (ih < 0 || ih >= in_h || iw < 0 || iw >= in_w) continue;
              s += w[((oc * in_c + ic) * ksize + kh) * ksize + kw] *
                   in[(ic * in_h + ih) * in_w + iw];
            }
        out[(oc * out_h + oh) * out_w + ow] = s;
      }
}

void conv2d_backward_input(const double* gout, int out_c, int out_h, int out_w,
                           const double* w, int in_c, int in_h, int in_w,
                           int ksize, int stride, int pad, double* gin) {
  for (int ic = 0; ic < in_c; ++ic)
    for (int ih = 0; ih < in_h; ++ih)
      for (int iw = 0; iw < in_w; ++iw) {
        double s = 0.0;
        for (int oc = 0; oc < out_c; ++oc)
          for (int kh = 0; kh < ksize; ++kh)
            for (int kw = 0; kw < ksize; ++kw) {
              int oh_num = ih + pad - kh;
              int ow_num = iw + pad - kw;
              if (oh_num % stride != 0 || ow_num % stride != 0) continue;
              int oh = oh_num / stride;
              int ow = ow_num / stride;
              if (oh < 0 || oh >= out_h || ow < 0 || ow >= out_w) continue;
              s += w[((oc * in_c + ic) * ksize + kh) * ksize + kw] *
                   gout[(oc * out_h + oh) * out_w + ow];
            }
        gin[(ic * in_h + ih) * in_w + iw] = s;
      }
}

void conv2d_backward_params(const double* gout, int out_c, int out_h,
                            int out_w, const double* in, int in_c, int in_h,
                            int in_w, int ksize, int stride, int pad,
                            double* gw, double* gbias) {
  for (int oc = 0; oc < out_c; ++oc) {
    double gb = 0.0;
    for (int oh = 0; oh < out_h; ++oh)
      for (int ow = 0; ow < out_w; ++ow)
        gb += gout[(oc * out_h + oh) * out_w + ow];
    gbias[oc] += gb;
    for (int ic = 0; ic < in_c; ++ic)
      for (int kh = 0; kh < ksize; ++kh)
        for (int kw = 0; kw < ksize; ++kw) {
          double s = 0.0;
          for (int oh = 0; oh < out_h; ++oh)
            for (int ow = 0; ow < out_w; ++ow) {
              int ih = oh * stride - pad + kh;
              int iw = ow * stride - pad + kw;
              if (ih < 0 || ih >= in_h || iw < 0 || iw >= in_w) continue;
              s += gout[(oc * out_h + oh) * out_w + ow] *
                   in[(ic * in_h + ih) * in_w + iw];
            }
          gw[((oc * in_c + ic) * ksize + kh) * ksize + kw] += s;
        }
  }
}

}  // namespace serial

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_mul(a, b, 1, 1, "matmul");
  Matrix out(a.rows, b.cols);
#pragma omp parallel for
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_mul(a, b, 1, 0, "matmul_nt");
  Matrix out(a.rows, b.rows);
#pragma omp parallel for
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.rows; ++j)
      out(i, j) = dot_rows(a.row(i), b.row(j), a.cols);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_mul(a, b, 0, 1, "matmul_tn");
  Matrix out(a.cols, b.cols);
#pragma omp parallel for
  for (int i = 0; i < a.cols; ++i)
    for (int j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (int k = 0; k < a.rows; ++k) s += a(k, i) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols)
    throw InvalidInput("pairwise_sq_dist: feature dimension mismatch");
  VecD na(a.rows), nb(b.rows);
#pragma omp parallel for
  for (int i = 0; i < a.rows; ++i) na[i] = dot_rows(a.row(i), a.row(i), a.cols);
#pragma omp parallel for
  for (int j = 0; j < b.rows; ++j) nb[j] = dot_rows(b.row(j), b.row(j), b.cols);
  Matrix out(a.rows, b.rows);
#pragma omp parallel for
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.rows; ++j) {
      double d = na[i] + nb[j] - 2.0 * dot_rows(a.row(i), b.row(j), a.cols);
      out(i, j) = d < 0.0 ? 0.0 : d;
    }
  return out;
}

Matrix gram(const Matrix& c) {
  Matrix out(c.cols, c.cols);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < c.cols; ++i)
    for (int j = i; j < c.cols; ++j) {
      double s = 0.0;
      for (int k = 0; k < c.rows; ++k) s += c(k, i) * c(k, j);
      out(i, j) = s;
      out(j, i) = s;
    }
  return out;
}

void conv2d_forward(const double* in, int in_c, int in_h, int in_w,
                    const double* w, const double* bias, int out_c, int ksize,
                    int stride, int pad, double* out, int out_h, int out_w) {
#pragma omp parallel for
  for (int oc = 0; oc < out_c; ++oc)
    for (int oh = 0; oh < out_h; ++oh)
      for (int ow = 0; ow < out_w; ++ow) {
        double s = bias[oc];
        for (int ic = 0; ic < in_c; ++ic)
          for (int kh = 0; kh < ksize; ++kh)
            for (int kw = 0; kw < ksize; ++kw) {
              int ih = oh * stride - pad + kh;
              int iw = ow * stride - pad + kw;
              if (ih < 0 || ih >= in_h || iw < 0 || iw >= in_w) continue;
              s += w[((oc * in_c + ic) * ksize + kh) * ksize + kw] *
                   in[(ic * in_h + ih) * in_w + iw];
            }
        out[(oc * out_h + oh) * out_w + ow] = s;
      }
}

void conv2d_backward_input(const double* gout, int out_c, int out_h, int out_w,
                           const double* w, int in_c, int in_h, int in_w,
                           int ksize, int stride, int pad, double* gin) {
#pragma omp parallel for
  for (int ic = 0; ic < in_c; ++ic)
    for (int ih = 0; ih < in_h; ++ih)
      for (int iw = 0; iw < in_w; ++iw) {
        double s = 0.0;
        for (int oc = 0; oc < out_c; ++oc)
          for (int kh = 0; kh < ksize; ++kh)
            for (int kw = 0; kw < ksize; ++kw) {
              int oh_num = ih + pad - kh;
              int ow_num = iw + pad - kw;
              if (oh_num % stride != 0 || ow_num % stride != 0) continue;
              int oh = oh_num / stride;
              int ow = ow_num / stride;
              if (oh < 0 || oh >= out_h || ow < 0 || ow >= out_w) continue;
              s += w[((oc * in_c + ic) * ksize + kh) * ksize + kw] *
                   gout[(oc * out_h + oh) * out_w + ow];
            }
        gin[(ic * in_h + ih) * in_w + iw] = s;
      }
}

void conv2d_backward_params(const double* gout, int out_c, int out_h,
                            int out_w, const double* in, int in_c, int in_h,
                            int in_w, int ksize, int stride, int pad,
                            double* gw, double* gbias) {
#pragma omp parallel for
  for (int oc = 0; oc < out_c; ++oc) {
    double gb = 0.0;
    for (int oh = 0; oh < out_h; ++oh)
      for (int ow = 0; ow < out_w; ++ow)
        gb += gout[(oc * out_h + oh) * out_w + ow];
    gbias[oc] += gb;
    for (int ic = 0; ic < in_c; ++ic)
      for (int kh = 0; kh < ksize; ++kh)
        for (int kw = 0; kw < ksize; ++kw) {
          double s = 0.0;
          for (int oh = 0; oh < out_h; ++oh)
            for (int ow = 0; ow < out_w; ++ow) {
              int ih = oh * stride - pad + kh;
              int iw = ow * stride - pad + kw;
              if (ih < 0 || ih >= in_h || iw < 0 || iw >= in_w) continue;
              s += gout[(oc * out_h + oh) * out_w + ow] *
                   in[(ic * in_h + ih) * in_w + iw];
            }
          gw[((oc * in_c + ic) * ksize + kh) * ksize + kw] += s;
        }
  }
}

double frobenius_sq(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data) s += x * x;
  return s;
}

VecD l2_normalize(const VecD& v) {
  if (v.empty()) throw InvalidInput("l2_normalize: empty vector");
  if (!all_finite(v)) throw InvalidInput("l2_normalize: non-finite entries");
  double sq = 0.0;
  for (double x : v) sq += x * x;
  double norm = std::sqrt(sq);
  VecD out(v.size(), 0.0);
  if (norm <= 1e-12) {
    out[0] = 1.0;
    return out;
  }
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

}  // namespace ocl::kern
