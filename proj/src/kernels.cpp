#include "vcsl/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace vcsl::kern {

// --- scalar reference backend ---

namespace {

double s_dot(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double s_sum(const double* x, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double s_max_value(const double* x, size_t n) {
  if (n == 0) throw std::runtime_error("kern::max_value: empty input");
  double m = x[0];
  for (size_t i = 1; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

void s_add(const double* a, const double* b, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void s_mul(const double* a, const double* b, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void s_scale(const double* x, double alpha, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

void s_axpy(double alpha, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void s_matmul_nn(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void s_matmul_nt(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n, bool accumulate) {
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double v = s_dot(arow, b + j * k, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

void s_matmul_tn(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

const KernelTable kScalarTable = {
    s_dot,    s_sum,   s_max_value, s_add,         s_sub,         s_mul,
    s_scale,  s_axpy,  s_matmul_nn, s_matmul_nt,   s_matmul_tn,
};

}  // namespace

const KernelTable& scalar_table() { return kScalarTable; }

// --- backend registry and dispatch ---

#if defined(VCSL_HAVE_AVX2_TU)
const KernelTable& avx2_table();  // defined in kernels_avx2.cpp
bool avx2_supported();
#endif
#if defined(VCSL_HAVE_NEON_TU)
const KernelTable& neon_table();  // defined in kernels_neon.cpp
#endif

namespace {

struct Dispatch {
  const KernelTable* table = &kScalarTable;
  Backend backend = Backend::kScalar;
  bool selected = false;
};

Dispatch g_dispatch;

Backend best_available() {
#if defined(VCSL_HAVE_AVX2_TU)
  if (avx2_supported()) return Backend::kAvx2;
#endif
#if defined(VCSL_HAVE_NEON_TU)
  return Backend::kNeon;
#endif
  return Backend::kScalar;
}

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return &kScalarTable;
    case Backend::kAvx2:
#if defined(VCSL_HAVE_AVX2_TU)
      if (avx2_supported()) return &avx2_table();
#endif
      return nullptr;
    case Backend::kNeon:
#if defined(VCSL_HAVE_NEON_TU)
      return &neon_table();
#else
      return nullptr;
#endif
  }
  return nullptr;
}

const Dispatch& active() {
  if (!g_dispatch.selected) select_backend_auto();
  return g_dispatch;
}

}  // namespace

bool backend_available(Backend b) { return table_for(b) != nullptr; }

Backend active_backend() { return active().backend; }

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "?";
}

void set_backend(Backend b) {
  const KernelTable* t = table_for(b);
  if (t == nullptr)
    throw std::runtime_error(std::string("kern::set_backend: backend '") +
                             backend_name(b) +
                             "' is not available on this build/CPU");
  g_dispatch.table = t;
  g_dispatch.backend = b;
  g_dispatch.selected = true;
}

Backend parse_backend(const std::string& name) {
  if (name == "auto") return best_available();
  if (name == "scalar") return Backend::kScalar;
  if (name == "avx2") return Backend::kAvx2;
  if (name == "neon") return Backend::kNeon;
  throw std::runtime_error("kern::parse_backend: unknown backend '" + name +
                           "' (expected auto|scalar|avx2|neon)");
}

void select_backend_auto() {
  Backend choice = best_available();
  if (const char* env = std::getenv("VCSL_KERNELS"); env != nullptr && *env)
    choice = parse_backend(env);
  set_backend(choice);
}

double dot(const double* a, const double* b, size_t n) {
  return active().table->dot(a, b, n);
}
double sum(const double* x, size_t n) { return active().table->sum(x, n); }
double max_value(const double* x, size_t n) {
  return active().table->max_value(x, n);
}
void add(const double* a, const double* b, double* out, size_t n) {
  active().table->add(a, b, out, n);
}
void sub(const double* a, const double* b, double* out, size_t n) {
  active().table->sub(a, b, out, n);
}
void mul(const double* a, const double* b, double* out, size_t n) {
  active().table->mul(a, b, out, n);
}
void scale(const double* x, double alpha, double* out, size_t n) {
  active().table->scale(x, alpha, out, n);
}
void axpy(double alpha, const double* x, double* y, size_t n) {
  active().table->axpy(alpha, x, y, n);
}
void matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n, bool accumulate) {
  active().table->matmul_nn(a, b, c, m, k, n, accumulate);
}
void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n, bool accumulate) {
  active().table->matmul_nt(a, b, c, m, k, n, accumulate);
}
void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n, bool accumulate) {
  active().table->matmul_tn(a, b, c, m, k, n, accumulate);
}

}  // namespace vcsl::kern
