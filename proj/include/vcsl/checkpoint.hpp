#pragma once

// Versioned binary container for a training run's parameters and cursor.
//
// Layout (all integers little-endian):
//   "VCSL"                       4 magic bytes
//   u32  format version          currently 1; anything else refuses to load
//   u64  corpus seed             regenerates the exact training corpus
//   u64  model init seed
//   i32  stage cursor            highest stage completed so far
//   i32  epoch cursor            epochs finished within that stage
//   u32  parameter count
//   per parameter: u32 name length, name bytes, u32 rows, u32 cols,
//                  rows*cols f64 values (IEEE-754 bit patterns)
//
// Loading matches blobs to the live model by parameter name and requires an
// exact shape match, so a checkpoint can never be silently applied to a
// model built from a different configuration.  Values survive bit-exactly,
// signed zeros and subnormals included.

#include <cstdint>
#include <string>

#include "vcsl/pipeline.hpp"

namespace vcsl {

struct CheckpointMeta {
  uint64_t corpus_seed = 0;
  uint64_t init_seed = 0;
  int stage = 0;
  int epoch = 0;
};

void save_checkpoint(const std::string& path, const ModelState& state,
                     uint64_t corpus_seed);

// Header fields only; cheap enough for prerequisite checks.
CheckpointMeta read_checkpoint_meta(const std::string& path);

// Overwrites every parameter and the training cursor of `state` in place.
CheckpointMeta load_checkpoint(const std::string& path, ModelState& state);

}  // namespace vcsl
