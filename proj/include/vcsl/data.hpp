#pragma once

// Plain containers for square grayscale slices and slice stacks (volumes).
// Values are f64 in [0, 1] by convention; nothing here enforces a range.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vcsl {

// Row-major square image: v[y * extent + x].
struct Slice {
  int extent = 0;
  std::vector<double> v;

  Slice() = default;
  Slice(int extent_, std::vector<double> values)
      : extent(extent_), v(std::move(values)) {
    if (v.size() != static_cast<size_t>(extent) * extent)
      throw std::runtime_error("Slice: value count " +
                               std::to_string(v.size()) + " does not fill " +
                               std::to_string(extent) + "x" +
                               std::to_string(extent));
  }
  static Slice zeros(int extent) {
    return Slice(extent,
                 std::vector<double>(static_cast<size_t>(extent) * extent));
  }
  size_t pixel_count() const { return v.size(); }
};

// Stack of `depth` slices sharing one extent, stored slice-major.
struct Volume {
  int extent = 0;
  int depth = 0;
  std::vector<double> v;

  Volume() = default;
  Volume(int extent_, int depth_, std::vector<double> values)
      : extent(extent_), depth(depth_), v(std::move(values)) {
    if (v.size() != static_cast<size_t>(extent) * extent * depth)
      throw std::runtime_error("Volume: value count does not fill " +
                               std::to_string(depth) + " slices of " +
                               std::to_string(extent) + "x" +
                               std::to_string(extent));
  }
  static Volume zeros(int extent, int depth) {
    return Volume(
        extent, depth,
        std::vector<double>(static_cast<size_t>(extent) * extent * depth));
  }

  size_t slice_pixels() const { return static_cast<size_t>(extent) * extent; }

  std::span<const double> slice_span(int i) const {
    if (i < 0 || i >= depth)
      throw std::runtime_error("Volume: slice index " + std::to_string(i) +
                               " out of range [0, " + std::to_string(depth) +
                               ")");
    return {v.data() + static_cast<size_t>(i) * slice_pixels(),
            slice_pixels()};
  }

  Slice slice_copy(int i) const {
    auto s = slice_span(i);
    return Slice(extent, std::vector<double>(s.begin(), s.end()));
  }
};

}  // namespace vcsl
