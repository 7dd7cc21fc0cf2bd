// NEON kernel backend for aarch64.  NEON is architecturally guaranteed on
// aarch64, so there is no runtime feature probe; this translation unit is
// only compiled into aarch64 builds.
//
// Mirrors the AVX2 backend: elementwise kernels are bit-identical to scalar,
// reductions/matmuls use 2-lane vector accumulators plus fused multiply-add
// and agree with scalar results to rounding.

#include <arm_neon.h>

#include <cstring>

#include "vcsl/kernels.hpp"

namespace vcsl::kern {

namespace {

double n_dot(const double* a, const double* b, size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  size_t i = 0;
  for (; i + 2 <= n; i += 2)
    acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double n_sum(const double* x, size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double n_max_value(const double* x, size_t n) {
  size_t i = 0;
  double m = x[0];
  if (n >= 2) {
    float64x2_t acc = vld1q_f64(x);
    i = 2;
    for (; i + 2 <= n; i += 2) acc = vmaxq_f64(acc, vld1q_f64(x + i));
    m = vmaxvq_f64(acc);
  }
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

void n_add(const double* a, const double* b, double* out, size_t n) {
  size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void n_sub(const double* a, const double* b, double* out, size_t n) {
  size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void n_mul(const double* a, const double* b, double* out, size_t n) {
  size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void n_scale(const double* x, double alpha, double* out, size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void n_axpy(double alpha, const double* x, double* y, size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  size_t i = 0;
  // mul+add (not fused) to stay bit-identical with the scalar backend
  for (; i + 2 <= n; i += 2) {
    float64x2_t prod = vmulq_f64(va, vld1q_f64(x + i));
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void n_matmul_nn(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      const float64x2_t av = vdupq_n_f64(arow[p]);
      const double* brow = b + p * n;
      size_t j = 0;
      for (; j + 2 <= n; j += 2)
        vst1q_f64(crow + j,
                  vfmaq_f64(vld1q_f64(crow + j), av, vld1q_f64(brow + j)));
      for (; j < n; ++j) crow[j] += arow[p] * brow[j];
    }
  }
}

void n_matmul_nt(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n, bool accumulate) {
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double v = n_dot(arow, b + j * k, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

void n_matmul_tn(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (size_t i = 0; i < m; ++i) {
      const float64x2_t av = vdupq_n_f64(arow[i]);
      double* crow = c + i * n;
      size_t j = 0;
      for (; j + 2 <= n; j += 2)
        vst1q_f64(crow + j,
                  vfmaq_f64(vld1q_f64(crow + j), av, vld1q_f64(brow + j)));
      for (; j < n; ++j) crow[j] += arow[i] * brow[j];
    }
  }
}

const KernelTable kNeonTable = {
    n_dot,   n_sum,  n_max_value, n_add,       n_sub,       n_mul,
    n_scale, n_axpy, n_matmul_nn, n_matmul_nt, n_matmul_tn,
};

}  // namespace

const KernelTable& neon_table() { return kNeonTable; }

}  // namespace vcsl::kern
