#pragma once

// Dense f64 compute kernels with runtime backend selection.
//
// Every hot loop in the library (matrix products, reductions, elementwise
// arithmetic) routes through this table.  A portable scalar backend is the
// reference; AVX2 (x86-64) and NEON (aarch64) variants are compiled in
// architecture-specific translation units and selected at startup based on
// CPU capabilities.  The VCSL_KERNELS environment variable ("auto", "scalar",
// "avx2", "neon") or set_backend() overrides the choice — deterministic runs
// pin the scalar backend so results do not depend on the host CPU.
//
// Elementwise kernels are required to match the scalar backend bit for bit.
// Reductions and matrix products may re-associate sums, so they are only
// required to agree to tight relative tolerance; within one backend they are
// exactly reproducible.

#include <cstddef>
#include <string>

namespace vcsl::kern {

enum class Backend { kScalar, kAvx2, kNeon };

// Dispatch table filled in by each backend.
struct KernelTable {
  double (*dot)(const double*, const double*, size_t);
  double (*sum)(const double*, size_t);
  double (*max_value)(const double*, size_t);  // n >= 1
  void (*add)(const double*, const double*, double*, size_t);
  void (*sub)(const double*, const double*, double*, size_t);
  void (*mul)(const double*, const double*, double*, size_t);
  void (*scale)(const double*, double, double*, size_t);
  void (*axpy)(double, const double*, double*, size_t);  // y += a*x
  // C[m x n] (+)= A[m x k] * B[k x n]
  void (*matmul_nn)(const double*, const double*, double*, size_t, size_t,
                    size_t, bool);
  // C[m x n] (+)= A[m x k] * B[n x k]^T
  void (*matmul_nt)(const double*, const double*, double*, size_t, size_t,
                    size_t, bool);
  // C[m x n] (+)= A[k x m]^T * B[k x n]
  void (*matmul_tn)(const double*, const double*, double*, size_t, size_t,
                    size_t, bool);
};

const KernelTable& scalar_table();

bool backend_available(Backend b);
Backend active_backend();
const char* backend_name(Backend b);

// Selects a backend explicitly; throws std::runtime_error if this build or
// CPU does not support it.
void set_backend(Backend b);

// Picks the best available backend, honoring VCSL_KERNELS when set.  Called
// lazily on first kernel use; invoke directly to re-read the environment.
void select_backend_auto();

// Parses "scalar"/"avx2"/"neon"/"auto"; throws on anything else.  "auto"
// reports the backend auto-selection would pick.
Backend parse_backend(const std::string& name);

// --- dispatched entry points ---

double dot(const double* a, const double* b, size_t n);
double sum(const double* x, size_t n);
double max_value(const double* x, size_t n);
void add(const double* a, const double* b, double* out, size_t n);
void sub(const double* a, const double* b, double* out, size_t n);
void mul(const double* a, const double* b, double* out, size_t n);
void scale(const double* x, double alpha, double* out, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);
void matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n, bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n, bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n, bool accumulate = false);

}  // namespace vcsl::kern
