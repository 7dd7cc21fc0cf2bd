#include "vcsl/prototypes.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "vcsl/kernels.hpp"

namespace vcsl {

CodeMatrix sinkhorn_codes(std::span<const double> scores, int rows, int cols,
                          const SinkhornOptions& opts) {
  if (rows < 1 || cols < 1)
    throw std::runtime_error("sinkhorn_codes: need at least one row and one "
                             "column, got " +
                             std::to_string(rows) + " x " +
                             std::to_string(cols));
  if (scores.size() != static_cast<size_t>(rows) * cols)
    throw std::runtime_error("sinkhorn_codes: score count " +
                             std::to_string(scores.size()) +
                             " does not fill [" + std::to_string(rows) +
                             " x " + std::to_string(cols) + "]");
  if (!(opts.epsilon > 0.0))
    throw std::runtime_error("sinkhorn_codes: epsilon must be positive, got " +
                             std::to_string(opts.epsilon));
  if (opts.max_iters < 1)
    throw std::runtime_error("sinkhorn_codes: max_iters must be >= 1");
  if (opts.tol < 0.0)
    throw std::runtime_error("sinkhorn_codes: tol must be >= 0");
  for (double s : scores)
    if (!std::isfinite(s))
      throw std::runtime_error("sinkhorn_codes: non-finite score");

  const size_t n = scores.size();
  // Subtract the global max before exponentiating so the kernel matrix
  // cannot overflow; the shift cancels in the rescaling.
  const double smax = kern::max_value(scores.data(), n);
  std::vector<double> k(n);
  for (size_t i = 0; i < n; ++i)
    k[i] = std::exp((scores[i] - smax) / opts.epsilon);

  // A fully underflowed row or column can never reach its target marginal.
  for (int r = 0; r < rows; ++r) {
    if (kern::sum(k.data() + static_cast<size_t>(r) * cols,
                  static_cast<size_t>(cols)) == 0.0)
      throw std::runtime_error(
          "sinkhorn_codes: kernel row " + std::to_string(r) +
          " underflowed to zero; increase epsilon");
  }
  for (int c = 0; c < cols; ++c) {
    double cs = 0.0;
    for (int r = 0; r < rows; ++r)
      cs += k[static_cast<size_t>(r) * cols + static_cast<size_t>(c)];
    if (cs == 0.0)
      throw std::runtime_error(
          "sinkhorn_codes: kernel column " + std::to_string(c) +
          " underflowed to zero; increase epsilon");
  }

  const double row_target = 1.0 / rows;
  const double col_target = 1.0 / cols;
  std::vector<double> u(static_cast<size_t>(rows), 1.0);
  std::vector<double> v(static_cast<size_t>(cols), 1.0);

  CodeMatrix out;
  out.rows = rows;
  out.cols = cols;

  for (int t = 0; t < opts.max_iters; ++t) {
    // Column pass: v_j = col_target / sum_i u_i k_ij.
    for (int c = 0; c < cols; ++c) {
      double cs = 0.0;
      for (int r = 0; r < rows; ++r)
        cs += u[static_cast<size_t>(r)] *
              k[static_cast<size_t>(r) * cols + static_cast<size_t>(c)];
      v[static_cast<size_t>(c)] = col_target / cs;
    }
    // Row pass: u_i = row_target / sum_j k_ij v_j (rows now exact).
    for (int r = 0; r < rows; ++r) {
      const double* krow = k.data() + static_cast<size_t>(r) * cols;
      double rs = 0.0;
      for (int c = 0; c < cols; ++c) rs += krow[c] * v[static_cast<size_t>(c)];
      u[static_cast<size_t>(r)] = row_target / rs;
    }
    // Residual: how far columns drifted after the row pass.
    double resid = 0.0;
    for (int c = 0; c < cols; ++c) {
      double cs = 0.0;
      for (int r = 0; r < rows; ++r)
        cs += u[static_cast<size_t>(r)] *
              k[static_cast<size_t>(r) * cols + static_cast<size_t>(c)] *
              v[static_cast<size_t>(c)];
      const double dev = std::abs(cs - col_target);
      if (dev > resid) resid = dev;
    }
    out.iters = t + 1;
    out.residual = resid;
    if (resid <= opts.tol) {
      out.converged = true;
      break;
    }
  }

  out.q.resize(n);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out.q[static_cast<size_t>(r) * cols + static_cast<size_t>(c)] =
          u[static_cast<size_t>(r)] *
          k[static_cast<size_t>(r) * cols + static_cast<size_t>(c)] *
          v[static_cast<size_t>(c)];
  return out;
}

std::vector<double> column_code(const CodeMatrix& codes, int col) {
  if (col < 0 || col >= codes.cols)
    throw std::runtime_error("column_code: column " + std::to_string(col) +
                             " out of range [0, " +
                             std::to_string(codes.cols) + ")");
  std::vector<double> q(static_cast<size_t>(codes.rows));
  double s = 0.0;
  for (int r = 0; r < codes.rows; ++r) {
    q[static_cast<size_t>(r)] =
        codes.q[static_cast<size_t>(r) * codes.cols + static_cast<size_t>(col)];
    s += q[static_cast<size_t>(r)];
  }
  if (s <= 0.0)
    throw std::runtime_error("column_code: column " + std::to_string(col) +
                             " sums to zero");
  for (double& x : q) x /= s;
  return q;
}

Param make_prototypes(int count, int dim, Rng& rng) {
  if (count < 1 || dim < 1)
    throw std::runtime_error("make_prototypes: count and dim must be >= 1");
  Param p("prototypes.w", count, dim);
  for (double& x : p.v) x = rng.gaussian();
  renormalize_prototype_rows(p);
  return p;
}

void renormalize_prototype_rows(Param& protos) {
  for (int r = 0; r < protos.rows; ++r) {
    double* row = protos.v.data() + static_cast<size_t>(r) * protos.cols;
    const double sq = kern::dot(row, row, static_cast<size_t>(protos.cols));
    if (sq == 0.0)
      throw std::runtime_error("renormalize_prototype_rows: row " +
                               std::to_string(r) + " is all zero");
    kern::scale(row, 1.0 / std::sqrt(sq), row,
                static_cast<size_t>(protos.cols));
  }
}

std::vector<double> prototype_scores(const Param& protos,
                                     std::span<const double> features,
                                     int feature_rows) {
  if (feature_rows < 1)
    throw std::runtime_error("prototype_scores: need at least one feature row");
  if (features.size() != static_cast<size_t>(feature_rows) * protos.cols)
    throw std::runtime_error(
        "prototype_scores: feature matrix does not match prototype width " +
        std::to_string(protos.cols));
  std::vector<double> scores(static_cast<size_t>(protos.rows) * feature_rows);
  kern::matmul_nt(protos.v.data(), features.data(), scores.data(),
                  static_cast<size_t>(protos.rows),
                  static_cast<size_t>(protos.cols),
                  static_cast<size_t>(feature_rows));
  return scores;
}

}  // namespace vcsl
