#include "vcsl/losses.hpp"

#include <stdexcept>
#include <string>

#include "vcsl/kernels.hpp"

namespace vcsl {

ad::Tensor code_fit_loss(ad::Graph& g, ad::Tensor z,
                         std::span<const double> code, ad::Tensor protos,
                         double temperature) {
  if (!(temperature > 0.0))
    throw std::runtime_error("code_fit_loss: temperature must be positive, "
                             "got " + std::to_string(temperature));
  if (z.rows() != 1)
    throw std::runtime_error("code_fit_loss: embedding must be a [1 x d] row");
  if (protos.cols() != z.cols())
    throw std::runtime_error("code_fit_loss: embedding width " +
                             std::to_string(z.cols()) +
                             " != prototype width " +
                             std::to_string(protos.cols()));
  if (code.size() != static_cast<size_t>(protos.rows()))
    throw std::runtime_error("code_fit_loss: code length " +
                             std::to_string(code.size()) +
                             " != prototype count " +
                             std::to_string(protos.rows()));
  double csum = 0.0;
  for (double q : code) {
    if (q < 0.0)
      throw std::runtime_error("code_fit_loss: codes must be non-negative");
    csum += q;
  }
  if (csum <= 0.0)
    throw std::runtime_error("code_fit_loss: code sums to zero");
  std::vector<double> q(code.begin(), code.end());
  for (double& x : q) x /= csum;

  ad::Tensor logits = g.scale(g.matmul_nt(z, protos), 1.0 / temperature);
  ad::Tensor logp = g.log(g.softmax_rows(logits));
  ad::Tensor qc = g.constant(1, protos.rows(), q, "code");
  return g.scale(g.reduce_sum(g.mul(logp, qc)), -1.0);
}

ad::Tensor swapped_pair_loss(ad::Graph& g, ad::Tensor z_a,
                             std::span<const double> code_a, ad::Tensor z_b,
                             std::span<const double> code_b, ad::Tensor protos,
                             double temperature) {
  ad::Tensor fit_a = code_fit_loss(g, z_a, code_b, protos, temperature);
  ad::Tensor fit_b = code_fit_loss(g, z_b, code_a, protos, temperature);
  return g.add(fit_a, fit_b);
}

JointCodes assign_joint_codes(const std::vector<ad::Tensor>& za,
                              const std::vector<ad::Tensor>& zb,
                              ad::Tensor protos,
                              const SinkhornOptions& opts) {
  if (za.size() != zb.size())
    throw std::runtime_error("assign_joint_codes: view lists differ in size");
  const int batch = static_cast<int>(za.size());
  if (batch < 2)
    throw std::runtime_error(
        "assign_joint_codes: batch must contain at least 2 items, got " +
        std::to_string(batch));
  const int dim = protos.cols();
  const int count = protos.rows();
  const int m = 2 * batch;

  // Stack current embedding values, view-a block first.
  std::vector<double> stacked(static_cast<size_t>(m) * dim);
  for (int i = 0; i < batch; ++i) {
    const auto& va = za[static_cast<size_t>(i)].values();
    const auto& vb = zb[static_cast<size_t>(i)].values();
    if (static_cast<int>(va.size()) != dim ||
        static_cast<int>(vb.size()) != dim)
      throw std::runtime_error(
          "assign_joint_codes: embedding width mismatch at item " +
          std::to_string(i));
    std::copy(va.begin(), va.end(),
              stacked.begin() + static_cast<size_t>(i) * dim);
    std::copy(vb.begin(), vb.end(),
              stacked.begin() + static_cast<size_t>(batch + i) * dim);
  }

  std::vector<double> scores(static_cast<size_t>(count) * m);
  kern::matmul_nt(protos.values().data(), stacked.data(), scores.data(),
                  static_cast<size_t>(count), static_cast<size_t>(dim),
                  static_cast<size_t>(m));

  JointCodes out;
  out.matrix = sinkhorn_codes(scores, count, m, opts);
  out.a.reserve(static_cast<size_t>(batch));
  out.b.reserve(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    out.a.push_back(column_code(out.matrix, i));
    out.b.push_back(column_code(out.matrix, batch + i));
  }
  return out;
}

ad::Tensor batch_swapped_loss(ad::Graph& g, const std::vector<ad::Tensor>& za,
                              const std::vector<ad::Tensor>& zb,
                              ad::Tensor protos,
                              const ClusterLossConfig& cfg) {
  JointCodes codes = assign_joint_codes(za, zb, protos, cfg.sinkhorn);
  std::vector<ad::Tensor> pair_losses;
  pair_losses.reserve(za.size());
  for (size_t i = 0; i < za.size(); ++i)
    pair_losses.push_back(swapped_pair_loss(g, za[i], codes.a[i], zb[i],
                                            codes.b[i], protos,
                                            cfg.temperature));
  return g.reduce_mean(g.concat_rows(pair_losses));
}

}  // namespace vcsl
