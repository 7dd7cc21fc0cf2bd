#pragma once

// Three-stage training over a synthetic volume corpus.
//
// Stage 1 trains the slice encoder and the prototypes with the swapped
// clustering loss over augmented slice pairs.  Stage 2 freezes the encoder
// and trains the aggregator, decoder, and mask token with the masked
// prediction loss over single volume views.  Stage 3 trains encoder,
// aggregator, and prototypes jointly with the swapped clustering loss over
// holistic volume embeddings.
//
// An epoch is a fixed number of freshly sampled batches (full sweeps over
// every slice of every volume are a paper-scale budget); every draw comes
// from a child seed of (seed, stage, epoch, batch), so a run is a pure
// function of its config.  Optimization is plain SGD at a fixed rate, with
// prototype rows re-normalized to unit length after every step.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vcsl/attention.hpp"
#include "vcsl/augment.hpp"
#include "vcsl/corpus.hpp"
#include "vcsl/encoder.hpp"
#include "vcsl/masking.hpp"
#include "vcsl/prototypes.hpp"
#include "vcsl/losses.hpp"

namespace vcsl {

struct ModelConfig {
  EncoderConfig encoder;
  AttentionConfig attention;
  int prototypes = 12;  // cluster count, shared by both swapped losses
  int max_slices = 32;  // decoder bias rows; an upper bound on volume depth
  TransformSpec augment;

  void validate() const;
};

// Everything a training run owns: parameters plus the resume cursor.
struct ModelState {
  ModelConfig cfg;
  uint64_t init_seed = 0;
  EncoderParams encoder;
  AttentionParams attention;
  MaskHeadParams mask_head;
  Param prototypes;  // [prototypes x embed_dim], unit rows
  int stage_cursor = 0;  // highest stage reached
  int epoch_cursor = 0;  // epochs finished within that stage

  // Every trainable parameter, for checkpointing and audits.
  void for_each(const std::function<void(Param&)>& fn);
  void for_each(const std::function<void(const Param&)>& fn) const;
};

ModelState make_model_state(const ModelConfig& cfg, uint64_t seed);

struct TrainConfig {
  int stage = 1;
  int epochs = 50;
  int batch = 16;  // slices (stage 1) or volumes (stages 2-3)
  int batches_per_epoch = 6;
  double lr = 0.05;
  double temperature = 0.1;
  SinkhornOptions sinkhorn;   // training policy: few iterations, loose tol
  double mask_ratio = 0.10;
  bool squared_mask = false;
  bool joint_stage2 = false;  // also update the encoder in stage 2
  bool cold_start = false;    // skip the finished-prerequisite check
  bool strict = false;        // scalar kernels, zeroed wall clock
  uint64_t seed = 0;

  void validate() const;
};

struct EpochMetric {
  int stage = 0;
  int epoch = 0;      // zero-based
  double loss = 0.0;  // mean over the epoch's batches
  double wall_ms = 0.0;
  uint64_t seed = 0;  // the run's master seed
};

struct StageResult {
  std::vector<EpochMetric> epochs;
  // Largest | ||row||_2 - 1 | over every embedding the losses consumed.
  double max_norm_error = 0.0;
};

// One elementwise SGD update: p <- p - lr * g.
void sgd_step(Param& p, std::span<const double> grad, double lr);

// Runs one full stage over the label-free corpus view, mutating `state` and
// its cursor.  Aborts with epoch/batch coordinates on a non-finite loss.
StageResult run_stage(ModelState& state,
                      std::span<const Volume* const> volumes,
                      const TrainConfig& cfg);

// One JSON-lines record, fixed key order, loss at full f64 precision.
std::string metric_json_line(const EpochMetric& m);

}  // namespace vcsl
