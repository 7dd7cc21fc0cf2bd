#pragma once

// Seeded stochastic view generation for slices and volumes.
//
// A view is a pure function of (spec, seed, input): crop-and-resize, optional
// horizontal flip, a multiplicative intensity gain, and additive gaussian
// noise, applied in that fixed order.  The identity spec reproduces its input
// byte for byte, which downstream tests rely on.
//
// Volumes support two regimes: by default one parameter draw (noise field
// included) is shared by every slice, so the stack is deformed coherently;
// per_slice_independent re-draws everything per slice instead.

#include <cstdint>
#include <vector>

#include "vcsl/data.hpp"
#include "vcsl/rng.hpp"

namespace vcsl {

struct TransformSpec {
  // Smallest fraction of the slice area a crop may retain, in [0.5, 1].
  double crop_min_area = 0.7;
  bool allow_flip = true;
  double noise_sigma = 0.03;
  // Multiplicative intensity gain range.
  double intensity_lo = 0.85;
  double intensity_hi = 1.20;
  // Volumes only: draw fresh view parameters for every slice.
  bool per_slice_independent = false;

  // No-op parameters: full-area crop, no flip, unit gain, zero noise.
  static TransformSpec identity();
  void validate() const;
};

// One concrete draw from a TransformSpec.
struct ViewParams {
  int crop_x = 0;
  int crop_y = 0;
  int crop_side = 0;
  bool flip = false;
  double gain = 1.0;
  uint64_t noise_seed = 0;
};

ViewParams draw_view_params(const TransformSpec& spec, int extent, Rng& rng);

// Additive gaussian field with the given sigma; all-zero when sigma == 0.
std::vector<double> gaussian_field(int extent, double sigma, uint64_t seed);

// Applies crop/resize + flip + gain, then adds `noise` (pass an empty span
// for none).  Pure in all arguments.
Slice render_view(const Slice& in, const ViewParams& view,
                  std::span<const double> noise);

Slice augment_slice(const Slice& in, const TransformSpec& spec,
                    uint64_t seed);
Volume augment_volume(const Volume& in, const TransformSpec& spec,
                      uint64_t seed);

}  // namespace vcsl
