#include "vcsl/augment.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vcsl {

TransformSpec TransformSpec::identity() {
  TransformSpec s;
  s.crop_min_area = 1.0;
  s.allow_flip = false;
  s.noise_sigma = 0.0;
  s.intensity_lo = 1.0;
  s.intensity_hi = 1.0;
  return s;
}

void TransformSpec::validate() const {
  if (!(crop_min_area >= 0.5 && crop_min_area <= 1.0))
    throw std::runtime_error(
        "TransformSpec: crop_min_area must lie in [0.5, 1], got " +
        std::to_string(crop_min_area));
  if (noise_sigma < 0.0)
    throw std::runtime_error("TransformSpec: noise_sigma must be >= 0");
  if (!(intensity_lo > 0.0) || intensity_hi < intensity_lo)
    throw std::runtime_error(
        "TransformSpec: intensity range must satisfy 0 < lo <= hi");
}

ViewParams draw_view_params(const TransformSpec& spec, int extent, Rng& rng) {
  spec.validate();
  if (extent < 8)
    throw std::runtime_error("draw_view_params: extent must be >= 8, got " +
                             std::to_string(extent));
  ViewParams v;
  // Fixed draw order keeps the stream layout stable across spec settings.
  const double area = rng.uniform(spec.crop_min_area, 1.0);
  int side = static_cast<int>(std::lround(extent * std::sqrt(area)));
  if (side < 2) side = 2;
  if (side > extent) side = extent;
  v.crop_side = side;
  v.crop_x = static_cast<int>(rng.below(static_cast<uint64_t>(extent - side) + 1));
  v.crop_y = static_cast<int>(rng.below(static_cast<uint64_t>(extent - side) + 1));
  const bool flip_draw = rng.below(2) != 0;
  v.flip = spec.allow_flip && flip_draw;
  v.gain = rng.uniform(spec.intensity_lo, spec.intensity_hi);
  v.noise_seed = rng.next_u64();
  return v;
}

std::vector<double> gaussian_field(int extent, double sigma, uint64_t seed) {
  std::vector<double> field(static_cast<size_t>(extent) * extent, 0.0);
  if (sigma > 0.0) {
    Rng rng(seed);
    for (double& x : field) x = rng.gaussian(0.0, sigma);
  }
  return field;
}

Slice render_view(const Slice& in, const ViewParams& view,
                  std::span<const double> noise) {
  const int e = in.extent;
  if (view.crop_side < 1 || view.crop_side > e || view.crop_x < 0 ||
      view.crop_y < 0 || view.crop_x + view.crop_side > e ||
      view.crop_y + view.crop_side > e)
    throw std::runtime_error("render_view: crop window [" +
                             std::to_string(view.crop_x) + ", " +
                             std::to_string(view.crop_y) + ", side " +
                             std::to_string(view.crop_side) +
                             "] does not fit a " + std::to_string(e) +
                             "-extent slice");
  if (!noise.empty() && noise.size() != in.pixel_count())
    throw std::runtime_error("render_view: noise field size mismatch");

  Slice out = Slice::zeros(e);
  const int side = view.crop_side;
  // Map output pixel x to crop-local position x*(side-1)/(e-1); this is the
  // exact identity when side == e, so a full-area crop is a bitwise copy.
  const double scale =
      e > 1 ? static_cast<double>(side - 1) / static_cast<double>(e - 1) : 0.0;
  for (int y = 0; y < e; ++y) {
    const double sy = view.crop_y + y * scale;
    int y0 = static_cast<int>(std::floor(sy));
    if (y0 > view.crop_y + side - 2) y0 = view.crop_y + side - 2;
    if (y0 < view.crop_y) y0 = view.crop_y;
    const double fy = sy - y0;
    for (int x = 0; x < e; ++x) {
      const int xi = view.flip ? e - 1 - x : x;
      const double sx = view.crop_x + xi * scale;
      int x0 = static_cast<int>(std::floor(sx));
      if (x0 > view.crop_x + side - 2) x0 = view.crop_x + side - 2;
      if (x0 < view.crop_x) x0 = view.crop_x;
      const double fx = sx - x0;
      const int y1 = side > 1 ? y0 + 1 : y0;
      const int x1 = side > 1 ? x0 + 1 : x0;
      const double v00 = in.v[static_cast<size_t>(y0) * e + x0];
      const double v01 = in.v[static_cast<size_t>(y0) * e + x1];
      const double v10 = in.v[static_cast<size_t>(y1) * e + x0];
      const double v11 = in.v[static_cast<size_t>(y1) * e + x1];
      const double top = (1.0 - fx) * v00 + fx * v01;
      const double bot = (1.0 - fx) * v10 + fx * v11;
      double val = ((1.0 - fy) * top + fy * bot) * view.gain;
      if (!noise.empty()) val += noise[static_cast<size_t>(y) * e + x];
      out.v[static_cast<size_t>(y) * e + x] = val;
    }
  }
  return out;
}

Slice augment_slice(const Slice& in, const TransformSpec& spec,
                    uint64_t seed) {
  Rng rng(seed);
  const ViewParams view = draw_view_params(spec, in.extent, rng);
  const auto noise =
      spec.noise_sigma > 0.0
          ? gaussian_field(in.extent, spec.noise_sigma, view.noise_seed)
          : std::vector<double>{};
  return render_view(in, view, noise);
}

Volume augment_volume(const Volume& in, const TransformSpec& spec,
                      uint64_t seed) {
  Volume out = Volume::zeros(in.extent, in.depth);
  if (spec.per_slice_independent) {
    for (int i = 0; i < in.depth; ++i) {
      const Slice view =
          augment_slice(in.slice_copy(i), spec, derive_seed(seed, static_cast<uint64_t>(i)));
      std::copy(view.v.begin(), view.v.end(),
                out.v.begin() + static_cast<size_t>(i) * in.slice_pixels());
    }
    return out;
  }
  // Shared regime: one parameter draw, one noise field, applied to every
  // slice so the whole stack moves together.
  Rng rng(seed);
  const ViewParams view = draw_view_params(spec, in.extent, rng);
  const auto noise =
      spec.noise_sigma > 0.0
          ? gaussian_field(in.extent, spec.noise_sigma, view.noise_seed)
          : std::vector<double>{};
  for (int i = 0; i < in.depth; ++i) {
    const Slice rendered = render_view(in.slice_copy(i), view, noise);
    std::copy(rendered.v.begin(), rendered.v.end(),
              out.v.begin() + static_cast<size_t>(i) * in.slice_pixels());
  }
  return out;
}

}  // namespace vcsl
