#pragma once

// Masked-embedding prediction task.
//
// A fraction of a volume's slices is masked: every level row belonging to a
// masked slice is replaced by one shared learnable token.  The aggregator
// runs in dense mode over the masked matrix, each masked slice's output rows
// are mean-pooled into a summary h_i, and a single affine decoder (shared
// weights, per-slice bias row) predicts the slice's concatenated level rows.
// The targets are the clean rows, gradient-blocked: the objective is the sum
// over masked slices of the Euclidean norm of the prediction residual
// (optionally the squared norm - the flag exists because either reading of
// the formula is defensible).
//
// Gradient therefore reaches the encoder only through the surviving unmasked
// rows, the aggregator and decoder through the prediction path, and the
// token through every masked row.

#include <cstdint>
#include <vector>

#include "vcsl/attention.hpp"
#include "vcsl/autodiff.hpp"
#include "vcsl/params.hpp"
#include "vcsl/rng.hpp"

namespace vcsl {

struct MaskPlan {
  int slices = 0;
  double ratio = 0.0;
  uint64_t seed = 0;
  std::vector<uint8_t> m;   // per slice: 1 = masked
  std::vector<int> masked;  // indices of the ones, ascending

  int count() const { return static_cast<int>(masked.size()); }
};

// Draws exactly max(1, ceil(ratio*slices)) positions uniformly without
// replacement; pure in (slices, ratio, seed).
MaskPlan sample_mask(int slices, double ratio, uint64_t seed);

struct MaskHeadParams {
  Param token;  // [1 x feature_dim]
  Param w;      // [feature_dim x taps*feature_dim]
  Param b;      // [max_slices x taps*feature_dim], row i biases slice i

  void for_each(const std::function<void(Param&)>& fn);
};

MaskHeadParams make_mask_head_params(int feature_dim, int taps,
                                     int max_slices, Rng& rng);

struct BoundMaskHead {
  int taps = 0;
  ad::Tensor token, w, b;
};

BoundMaskHead bind_mask_head(ad::Graph& g, Binder& binder,
                             MaskHeadParams& params, int taps,
                             bool trainable);

// Replaces all `taps` rows of every masked slice with the token row.
ad::Tensor apply_mask(ad::Graph& g, ad::Tensor y, const MaskPlan& plan,
                      ad::Tensor token, int taps);

// Full objective over an encoded feature matrix y [slices*taps x dim].
ad::Tensor masked_prediction_loss(ad::Graph& g, ad::Tensor y,
                                  const MaskPlan& plan,
                                  const BoundMaskHead& head,
                                  const BoundAttention& stack, bool squared);

}  // namespace vcsl
