#pragma once

// Frozen-embedding linear probe.
//
// Representation quality is measured by how well a single affine classifier,
// trained on 70% of the embeddings and scored on the held-out 30%, recovers
// the latent class labels.  The backbone never sees the labels and is never
// touched: the probe consumes plain value vectors.
//
// Training is full-batch gradient descent on the multinomial cross-entropy,
// run for a fixed number of rounds at a fixed rate; with a seeded split this
// makes every report a pure function of (embeddings, labels, seed).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vcsl/data.hpp"
#include "vcsl/pipeline.hpp"

namespace vcsl {

struct ProbeReport {
  double accuracy = 0.0;  // held-out fraction correct
  double chance = 0.0;    // 1 / classes
  std::vector<std::vector<int>> confusion;  // [true class][predicted class]
  std::string source;     // free-form tag: which embedding family was probed
  uint64_t seed = 0;
  int train_count = 0;
  int eval_count = 0;
};

// Trains the probe on a seeded 70/30 split.  Labels must be dense 0..C-1
// with at least two classes and at least 10 samples in each.
ProbeReport linear_probe(const std::vector<std::vector<double>>& embeddings,
                         const std::vector<int>& labels, uint64_t seed,
                         std::string source = {});

std::string probe_report_json(const ProbeReport& report);

// Clean (un-augmented) embeddings of full volumes / of every slice, for
// probing.  Labels for the slice view repeat each volume's label depth
// times.  Neither touches any parameter.
std::vector<std::vector<double>> embed_volumes(
    ModelState& state, std::span<const Volume* const> volumes);
std::vector<std::vector<double>> embed_slices(
    ModelState& state, std::span<const Volume* const> volumes);
std::vector<int> slice_labels(std::span<const int> volume_labels, int depth);

}  // namespace vcsl
