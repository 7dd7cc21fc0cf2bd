#pragma once

// Shared prototype bank and entropy-regularized code assignment.
//
// Prototypes are unit-norm rows of a [count x dim] parameter shared by the
// slice-level and volume-level objectives.  Codes are the solution of an
// entropic optimal-transport problem between batch columns and prototypes:
// starting from exp(scores / epsilon), alternating row/column rescaling
// (Sinkhorn-Knopp) drives the matrix onto the polytope with row sums 1/rows
// and column sums 1/cols.  The assignment is a pure numeric routine - it
// never enters an autodiff graph, so no gradient flows through it; consumers
// embed the resulting codes as constants.

#include <cstdint>
#include <span>
#include <vector>

#include "vcsl/params.hpp"
#include "vcsl/rng.hpp"

namespace vcsl {

struct SinkhornOptions {
  double epsilon = 0.05;  // entropy weight; larger = smoother codes
  int max_iters = 3;
  double tol = 1e-3;  // max column-marginal deviation at which to stop
};

struct CodeMatrix {
  int rows = 0;  // prototype count
  int cols = 0;  // assigned columns (stacked batch views)
  std::vector<double> q;  // row-major [rows x cols]
  int iters = 0;
  double residual = 0.0;  // max column-marginal deviation after the last pass
  bool converged = false; // residual <= tol (as opposed to hitting max_iters)
};

// scores is row-major [rows x cols]: scores[k][j] = similarity of column j
// to prototype k.  Throws if epsilon <= 0, the matrix degenerates (exp
// underflow making a whole row/column zero), or scores are non-finite.
CodeMatrix sinkhorn_codes(std::span<const double> scores, int rows, int cols,
                          const SinkhornOptions& opts);

// Column j of a code matrix, renormalized to sum exactly 1.
std::vector<double> column_code(const CodeMatrix& codes, int col);

// Unit-norm random rows; the parameter is named "prototypes.w".
Param make_prototypes(int count, int dim, Rng& rng);

// Projects each row back to unit norm (applied after every optimizer step).
void renormalize_prototype_rows(Param& protos);

// scores[k][j] = <protos row k, features row j>; features row-major
// [count x dim].  Plain numeric helper for code assignment.
std::vector<double> prototype_scores(const Param& protos,
                                     std::span<const double> features,
                                     int feature_rows);

}  // namespace vcsl
