#pragma once

// Consolidated finite-difference audit of the three training objectives.
//
// A toy model (8-wide embeddings, 4-slice volumes, 5 prototypes, two heads,
// two blocks) is built in general position — every parameter, including the
// normally zero-initialized offset and bias tables, is jittered — and each
// objective's analytic gradient is compared element by element against
// central differences for every trainable parameter.  Results are grouped by
// the leading segment of the parameter name (encoder, prototypes, attention,
// decoder, mask), reporting the worst relative error per group.
//
// The report also certifies that the assignment codes entered the graphs as
// gradient-free constants: the losses must treat codes as fixed targets.

#include <cstdint>
#include <string>
#include <vector>

namespace vcsl {

struct GradCheckEntry {
  std::string objective;  // which loss was audited
  std::string group;      // parameter family
  double max_rel_err = 0.0;
};

struct GradCheckOptions {
  uint64_t seed = 17;
  double step = 1e-5;
  // Fault-injection hook for the harness's own tests: adds `bump` to the
  // analytic gradient of every parameter whose name contains `corrupt`, so a
  // broken adjoint provably surfaces in the right group.
  std::string corrupt;
  double bump = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool codes_detached = false;
  bool passed(double tolerance) const {
    return codes_detached && worst < tolerance;
  }
};

GradCheckReport grad_check_all(const GradCheckOptions& opts = {});

std::string grad_check_json(const GradCheckReport& report);

}  // namespace vcsl
