#include "vcsl/masking.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vcsl {

MaskPlan sample_mask(int slices, double ratio, uint64_t seed) {
  if (slices < 1)
    throw std::runtime_error("sample_mask: need at least one slice, got " +
                             std::to_string(slices));
  if (!(ratio > 0.0) || ratio > 1.0)
    throw std::runtime_error("sample_mask: ratio must lie in (0, 1], got " +
                             std::to_string(ratio));
  MaskPlan plan;
  plan.slices = slices;
  plan.ratio = ratio;
  plan.seed = seed;
  // At least one position: small volumes would otherwise round to zero.
  const int count = std::max(
      1, static_cast<int>(std::ceil(ratio * static_cast<double>(slices))));
  Rng rng(seed);
  const std::vector<int> picks = rng.sample_without_replacement(slices, count);
  plan.m.assign(static_cast<size_t>(slices), 0);
  plan.masked.reserve(picks.size());
  for (int i : picks) {
    plan.m[static_cast<size_t>(i)] = 1;
    plan.masked.push_back(i);
  }
  return plan;
}

namespace {

// Symmetric uniform init scaled by fan-in + fan-out.
void glorot_fill(Param& p, int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& x : p.v) x = rng.uniform(-a, a);
}

}  // namespace

MaskHeadParams make_mask_head_params(int feature_dim, int taps,
                                     int max_slices, Rng& rng) {
  if (feature_dim < 1 || taps < 1 || max_slices < 1)
    throw std::runtime_error(
        "make_mask_head_params: dimensions must be positive");
  MaskHeadParams p;
  p.token = Param("mask.token", 1, feature_dim);
  glorot_fill(p.token, 1, feature_dim, rng);
  p.w = Param("decoder.w", feature_dim, taps * feature_dim);
  glorot_fill(p.w, feature_dim, taps * feature_dim, rng);
  p.b = Param("decoder.b", max_slices, taps * feature_dim);
  return p;
}

void MaskHeadParams::for_each(const std::function<void(Param&)>& fn) {
  fn(token);
  fn(w);
  fn(b);
}

BoundMaskHead bind_mask_head(ad::Graph& g, Binder& binder,
                             MaskHeadParams& params, int taps,
                             bool trainable) {
  (void)g;
  if (taps < 1)
    throw std::runtime_error("bind_mask_head: taps must be positive");
  if (params.w.cols != taps * params.w.rows)
    throw std::runtime_error(
        "bind_mask_head: decoder reconstructs " + std::to_string(taps) +
        " level rows of width " + std::to_string(params.w.rows) +
        ", so its output must be " + std::to_string(taps * params.w.rows) +
        " wide, got " + std::to_string(params.w.cols));
  BoundMaskHead out;
  out.taps = taps;
  out.token = binder.bind(params.token, trainable);
  out.w = binder.bind(params.w, trainable);
  out.b = binder.bind(params.b, trainable);
  return out;
}

ad::Tensor apply_mask(ad::Graph& g, ad::Tensor y, const MaskPlan& plan,
                      ad::Tensor token, int taps) {
  if (taps < 1 || y.rows() % taps != 0)
    throw std::runtime_error("apply_mask: row count " +
                             std::to_string(y.rows()) +
                             " is not a multiple of taps " +
                             std::to_string(taps));
  if (y.rows() / taps != plan.slices)
    throw std::runtime_error("apply_mask: plan covers " +
                             std::to_string(plan.slices) + " slices, input has " +
                             std::to_string(y.rows() / taps));
  std::vector<uint8_t> rows(static_cast<size_t>(y.rows()), 0);
  for (int i : plan.masked)
    for (int t = 0; t < taps; ++t)
      rows[static_cast<size_t>(i * taps + t)] = 1;
  return g.replace_rows(y, token, rows);
}

ad::Tensor masked_prediction_loss(ad::Graph& g, ad::Tensor y,
                                  const MaskPlan& plan,
                                  const BoundMaskHead& head,
                                  const BoundAttention& stack, bool squared) {
  if (plan.count() < 1)
    throw std::runtime_error("masked_prediction_loss: plan masks nothing");
  const int taps = head.taps;
  if (head.b.rows() < plan.slices)
    throw std::runtime_error("masked_prediction_loss: decoder bias covers " +
                             std::to_string(head.b.rows()) +
                             " slices, volume has " +
                             std::to_string(plan.slices));

  // Clean rows are the regression targets; no gradient flows through them.
  ad::Tensor targets = g.detach(y);
  ad::Tensor masked = apply_mask(g, y, plan, head.token, taps);
  ad::Tensor h = sequence_features(g, stack, masked).sequence;

  ad::Tensor level_mean =
      g.constant_fill(1, taps, 1.0 / taps, "level-mean");
  std::vector<ad::Tensor> penalties;
  penalties.reserve(plan.masked.size());
  for (int i : plan.masked) {
    std::vector<int64_t> level_rows(static_cast<size_t>(taps));
    for (int t = 0; t < taps; ++t)
      level_rows[static_cast<size_t>(t)] = i * taps + t;
    ad::Tensor h_i = g.matmul(level_mean, g.gather_rows(h, level_rows));
    ad::Tensor pred = g.add(g.matmul(h_i, head.w),
                            g.gather_rows(head.b, {i}));
    ad::Tensor target =
        g.reshape(g.gather_rows(targets, level_rows), 1, taps * y.cols());
    ad::Tensor residual = g.sub(pred, target);
    penalties.push_back(squared ? g.reduce_sum(g.mul(residual, residual))
                                : g.rows_l2_norm(residual));
  }
  return g.reduce_sum(g.concat_rows(penalties));
}

}  // namespace vcsl
