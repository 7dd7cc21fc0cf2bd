#include "vcsl/encoder.hpp"

#include <cmath>
#include <map>
#include <tuple>
#include <stdexcept>
#include <string>

namespace vcsl {

void EncoderConfig::validate() const {
  if (input_extent < 8)
    throw std::runtime_error("EncoderConfig: input_extent must be >= 8, got " +
                             std::to_string(input_extent));
  if (channels.empty())
    throw std::runtime_error("EncoderConfig: need at least one stage");
  for (int c : channels)
    if (c <= 0)
      throw std::runtime_error("EncoderConfig: channel counts must be positive");
  if (taps < 1 || taps > stages())
    throw std::runtime_error("EncoderConfig: taps must lie in [1, " +
                             std::to_string(stages()) + "], got " +
                             std::to_string(taps));
  if (feature_dim <= 0 || embed_dim <= 0)
    throw std::runtime_error(
        "EncoderConfig: feature_dim and embed_dim must be positive");
  int e = input_extent;
  for (int s = 0; s < stages(); ++s) {
    if (e % 2 != 0)
      throw std::runtime_error(
          "EncoderConfig: input_extent " + std::to_string(input_extent) +
          " does not halve cleanly through " + std::to_string(stages()) +
          " stride-2 stages");
    e /= 2;
  }
  if (e < 1)
    throw std::runtime_error("EncoderConfig: too many stages for extent " +
                             std::to_string(input_extent));
}

namespace {

// Symmetric uniform init scaled by fan-in + fan-out.
void glorot_fill(Param& p, int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& x : p.v) x = rng.uniform(-a, a);
}

}  // namespace

EncoderParams make_encoder_params(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderParams p;
  int c_in = 1;
  for (int s = 0; s < cfg.stages(); ++s) {
    const int c_out = cfg.channels[static_cast<size_t>(s)];
    Param w("encoder.conv" + std::to_string(s) + ".w", 9 * c_in, c_out);
    glorot_fill(w, 9 * c_in, c_out, rng);
    p.conv_w.push_back(std::move(w));
    p.conv_b.emplace_back("encoder.conv" + std::to_string(s) + ".b", 1, c_out);
    c_in = c_out;
  }
  const int first_tap = cfg.stages() - cfg.taps;
  for (int t = 0; t < cfg.taps; ++t) {
    const int c_stage = cfg.channels[static_cast<size_t>(first_tap + t)];
    Param w("encoder.tap" + std::to_string(t) + ".w", c_stage,
            cfg.feature_dim);
    glorot_fill(w, c_stage, cfg.feature_dim, rng);
    p.tap_w.push_back(std::move(w));
    p.tap_b.emplace_back("encoder.tap" + std::to_string(t) + ".b", 1,
                         cfg.feature_dim);
  }
  p.embed_w = Param("encoder.embed.w", cfg.channels.back(), cfg.embed_dim);
  glorot_fill(p.embed_w, cfg.channels.back(), cfg.embed_dim, rng);
  return p;
}

void EncoderParams::for_each(const std::function<void(Param&)>& fn) {
  for (auto& p : conv_w) fn(p);
  for (auto& p : conv_b) fn(p);
  for (auto& p : tap_w) fn(p);
  for (auto& p : tap_b) fn(p);
  fn(embed_w);
}

const std::vector<int64_t>& im2col_indices(int h, int w, int c) {
  static std::map<std::tuple<int, int, int>, std::vector<int64_t>> cache;
  auto key = std::make_tuple(h, w, c);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  const int h_out = (h - 1) / 2 + 1;
  const int w_out = (w - 1) / 2 + 1;
  std::vector<int64_t> idx(static_cast<size_t>(h_out) * w_out * 9 * c);
  size_t k = 0;
  for (int oy = 0; oy < h_out; ++oy) {
    for (int ox = 0; ox < w_out; ++ox) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = 2 * oy - 1 + ky;
          const int ix = 2 * ox - 1 + kx;
          const bool inside = iy >= 0 && iy < h && ix >= 0 && ix < w;
          for (int ch = 0; ch < c; ++ch)
            idx[k++] = inside
                           ? (static_cast<int64_t>(iy) * w + ix) * c + ch
                           : -1;
        }
      }
    }
  }
  return cache.emplace(key, std::move(idx)).first->second;
}

BoundEncoder bind_encoder(ad::Graph& g, Binder& binder, EncoderParams& params,
                          const EncoderConfig& cfg, bool trainable) {
  (void)g;
  BoundEncoder b;
  b.cfg = &cfg;
  for (auto& p : params.conv_w) b.conv_w.push_back(binder.bind(p, trainable));
  for (auto& p : params.conv_b) b.conv_b.push_back(binder.bind(p, trainable));
  for (auto& p : params.tap_w) b.tap_w.push_back(binder.bind(p, trainable));
  for (auto& p : params.tap_b) b.tap_b.push_back(binder.bind(p, trainable));
  b.embed_w = binder.bind(params.embed_w, trainable);
  return b;
}

namespace {

struct StageOutputs {
  std::vector<ad::Tensor> feature_maps;  // one per stage, [H_s*W_s x C_s]
  std::vector<int> extents;              // spatial extent per stage
};

// Runs the convolution stack on one slice given as a [e*e x 1] constant.
StageOutputs run_stack(ad::Graph& g, const BoundEncoder& enc,
                       std::span<const double> pixels, int extent) {
  const EncoderConfig& cfg = *enc.cfg;
  if (extent != cfg.input_extent)
    throw std::runtime_error("encode: slice extent " + std::to_string(extent) +
                             " != configured input_extent " +
                             std::to_string(cfg.input_extent));
  if (pixels.size() != static_cast<size_t>(extent) * extent)
    throw std::runtime_error("encode: pixel count does not fill the slice");

  StageOutputs out;
  ad::Tensor fm = g.constant(extent * extent, 1, pixels, "slice");
  int e = extent;
  int c_in = 1;
  for (int s = 0; s < cfg.stages(); ++s) {
    const auto& idx = im2col_indices(e, e, c_in);
    const int e_out = (e - 1) / 2 + 1;
    ad::Tensor patches =
        g.gather_elems(fm, idx, e_out * e_out, 9 * c_in);
    ad::Tensor lin = g.add_rowvec(
        g.matmul(patches, enc.conv_w[static_cast<size_t>(s)]),
        enc.conv_b[static_cast<size_t>(s)]);
    fm = g.tanh(lin);
    e = e_out;
    c_in = cfg.channels[static_cast<size_t>(s)];
    out.feature_maps.push_back(fm);
    out.extents.push_back(e);
  }
  return out;
}

// Global average pool: [HW x C] -> [1 x C] via a constant 1/HW row.
ad::Tensor global_pool(ad::Graph& g, ad::Tensor fm, int spatial) {
  ad::Tensor pool_row =
      g.constant_fill(1, spatial, 1.0 / static_cast<double>(spatial));
  return g.matmul(pool_row, fm);
}

}  // namespace

ad::Tensor encode_slice(ad::Graph& g, const BoundEncoder& enc,
                        std::span<const double> slice, int extent) {
  StageOutputs stages = run_stack(g, enc, slice, extent);
  const int last = static_cast<int>(stages.feature_maps.size()) - 1;
  const int e = stages.extents[static_cast<size_t>(last)];
  ad::Tensor pooled =
      global_pool(g, stages.feature_maps[static_cast<size_t>(last)], e * e);
  return g.l2_normalize_rows(g.matmul(pooled, enc.embed_w));
}

ad::Tensor encode_slice(ad::Graph& g, const BoundEncoder& enc,
                        const Slice& slice) {
  return encode_slice(g, enc, slice.v, slice.extent);
}

ad::Tensor encode_volume_rows(ad::Graph& g, const BoundEncoder& enc,
                              const Volume& vol) {
  const EncoderConfig& cfg = *enc.cfg;
  if (vol.depth < 1)
    throw std::runtime_error("encode_volume_rows: volume has no slices");
  const int first_tap = cfg.stages() - cfg.taps;
  std::vector<ad::Tensor> rows;
  rows.reserve(static_cast<size_t>(vol.depth) * cfg.taps);
  for (int i = 0; i < vol.depth; ++i) {
    StageOutputs stages = run_stack(g, enc, vol.slice_span(i), vol.extent);
    for (int t = 0; t < cfg.taps; ++t) {
      const size_t s = static_cast<size_t>(first_tap + t);
      const int e = stages.extents[s];
      ad::Tensor pooled = global_pool(g, stages.feature_maps[s], e * e);
      rows.push_back(g.add_rowvec(
          g.matmul(pooled, enc.tap_w[static_cast<size_t>(t)]),
          enc.tap_b[static_cast<size_t>(t)]));
    }
  }
  return g.concat_rows(rows);
}

}  // namespace vcsl
