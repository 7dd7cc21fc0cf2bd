#pragma once

// JSON run configuration.
//
// One document with sections {corpus, encoder, attention, losses, mask,
// train, probe}.  Every key has a default, so {} is a complete config; any
// key the schema does not know is rejected with its JSON-pointer path.
// serialize(parse(doc)) always reproduces the fully-defaulted document, and
// parse(serialize(cfg)) reproduces cfg, so configs are diffable artifacts.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "vcsl/corpus.hpp"
#include "vcsl/pipeline.hpp"

namespace vcsl {

// Schema violation; `pointer` is the JSON-pointer path of the offending key.
struct ConfigError : std::runtime_error {
  std::string pointer;
  ConfigError(std::string ptr, const std::string& what)
      : std::runtime_error("config " + ptr + ": " + what),
        pointer(std::move(ptr)) {}
};

struct StagePlan {
  int epochs = 50;
  int batch = 16;
  int batches_per_epoch = 6;
};

struct RunConfig {
  CorpusSpec corpus;
  ModelConfig model;  // encoder + attention + prototypes + decoder bound
  // Prediction softmax temperature.  Kept well above the assignment epsilon
  // so codes stay sharper than predictions, and high enough that the fixed
  // learning rate does not drive the clustering stages into the
  // uniform-prediction stationary point.
  double temperature = 0.25;
  SinkhornOptions sinkhorn;  // training policy (few iterations, loose tol)
  double mask_ratio = 0.10;
  bool squared_mask = false;
  StagePlan stage[3];  // indexed by stage-1
  double lr = 0.05;
  bool joint_stage2 = false;
  bool strict = false;
  uint64_t train_seed = 0;
  uint64_t probe_seed = 0;
  std::string notes;  // free-form; carried through serialization untouched

  // Assembles the TrainConfig for one stage (1-based).
  TrainConfig train_config(int stage_no) const;
  // Cross-section consistency (corpus geometry vs model expectations).
  void validate() const;
};

RunConfig default_run_config();

// Parses a full document; unknown keys and type mismatches throw
// ConfigError with the offending JSON-pointer.
RunConfig parse_run_config(const nlohmann::json& doc);

// The fully-defaulted document for `cfg`; parse(serialize(cfg)) == cfg.
nlohmann::json run_config_json(const RunConfig& cfg);

}  // namespace vcsl
