#pragma once

// Convolutional slice encoder.
//
// A stack of stride-2 3x3 convolutions (tanh activations) shrinks a square
// slice stage by stage.  Two read-outs come off the stack:
//   * the contrastive embedding z: global-average-pool of the deepest stage,
//     linearly projected to embed_dim and L2-normalized to the unit sphere;
//   * per-stage feature rows: the last `taps` stages are each pooled and
//     projected to feature_dim, giving `taps` rows per slice that the volume
//     aggregator consumes.
//
// Feature maps are [H*W x C] matrices; convolution is expressed as an
// index-gather (im2col) followed by a dense matmul so the whole encoder is
// differentiable through the standard op set.

#include <functional>
#include <vector>

#include "vcsl/autodiff.hpp"
#include "vcsl/data.hpp"
#include "vcsl/params.hpp"
#include "vcsl/rng.hpp"

namespace vcsl {

struct EncoderConfig {
  int input_extent = 32;
  std::vector<int> channels = {8, 16, 32, 64};  // one entry per stride-2 stage
  int taps = 2;          // how many of the deepest stages emit feature rows
  int feature_dim = 32;  // width of each per-stage feature row
  int embed_dim = 16;    // contrastive embedding width

  int stages() const { return static_cast<int>(channels.size()); }
  void validate() const;
};

struct EncoderParams {
  std::vector<Param> conv_w;  // stage s: [9*C_in x C_out]
  std::vector<Param> conv_b;  // stage s: [1 x C_out]
  std::vector<Param> tap_w;   // tapped stage t: [C_t x feature_dim]
  std::vector<Param> tap_b;   // tapped stage t: [1 x feature_dim]
  Param embed_w;              // [C_last x embed_dim]

  void for_each(const std::function<void(Param&)>& fn);
};

EncoderParams make_encoder_params(const EncoderConfig& cfg, Rng& rng);

// Parameter leaves of one encoder inside one graph.
struct BoundEncoder {
  const EncoderConfig* cfg = nullptr;
  std::vector<ad::Tensor> conv_w, conv_b, tap_w, tap_b;
  ad::Tensor embed_w;
};

BoundEncoder bind_encoder(ad::Graph& g, Binder& binder, EncoderParams& params,
                          const EncoderConfig& cfg, bool trainable);

// Unit-norm contrastive embedding, [1 x embed_dim].
ad::Tensor encode_slice(ad::Graph& g, const BoundEncoder& enc,
                        std::span<const double> slice, int extent);
ad::Tensor encode_slice(ad::Graph& g, const BoundEncoder& enc,
                        const Slice& slice);

// Multi-level feature rows for every slice of a volume, slice-major:
// row (i * taps + t) is tapped stage t of slice i.  [depth*taps x feature_dim]
ad::Tensor encode_volume_rows(ad::Graph& g, const BoundEncoder& enc,
                              const Volume& vol);

// Flat gather indices implementing a 3x3/stride-2/pad-1 convolution on an
// [h x w x c] feature map stored as [h*w x c]; -1 marks zero padding.
// Cached per (h, w, c).
const std::vector<int64_t>& im2col_indices(int h, int w, int c);

}  // namespace vcsl
