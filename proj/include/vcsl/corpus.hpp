#pragma once

// Synthetic volume corpus.
//
// Stands in for a collection of unlabeled scan archives: K datasets, each a
// list of volumes whose content is driven by a latent generative class.  The
// default "waves" construction gives class g a base intensity, an oriented
// sinusoidal texture, and a per-volume random phase that drifts smoothly
// along the slice axis:
//
//   value(x, y, slice i) = b_g
//                        + 0.2 * sin(2*pi*f_g*(x*cos a_g + y*sin a_g)/extent
//                                    + phase + 0.2*i)
//                        + noise * eta,   eta ~ N(0, 1), clamped to [0, 1]
//
// with b_g evenly spaced over [0.30, 0.70], f_g cycling 1..4 and a_g cycling
// 0/45/90/135 degrees.  Because the sinusoid is nearly mean-free, per-volume
// mean intensity separates the classes linearly, which is what the linear
// probe needs to be able to certify a representation.  The "constant" mode
// drops the texture and spaces flat intensities over [0.2, 0.8].
//
// Class labels exist only for evaluation: training code receives the
// label-free view, the probe asks for labels separately.

#include <cstdint>
#include <string>
#include <vector>

#include "vcsl/data.hpp"

namespace vcsl {

struct CorpusSpec {
  int datasets = 2;           // K archives
  std::vector<int> volumes;   // per-dataset counts; empty -> volumes_each
  int volumes_each = 100;
  int depth = 16;             // slices per volume
  int extent = 32;            // square slice edge
  int classes = 4;            // latent generative classes
  std::string pattern = "waves";  // or "constant"
  double noise = 0.02;        // pixel noise standard deviation
  uint64_t seed = 0;

  int count(int dataset) const {
    return volumes.empty() ? volumes_each
                           : volumes[static_cast<size_t>(dataset)];
  }
  int total() const {
    int n = 0;
    for (int d = 0; d < datasets; ++d) n += count(d);
    return n;
  }
  void validate() const;
};

struct TaggedVolume {
  Volume volume;
  int dataset = 0;  // which archive it belongs to
  int label = 0;    // latent class; probe-only, see views below
};

struct Corpus {
  CorpusSpec spec;
  std::vector<TaggedVolume> items;
  int size() const { return static_cast<int>(items.size()); }
};

// Deterministic in spec.seed; volume v of dataset d draws from an
// independent child stream, so corpora are stable under reordering.
Corpus generate_corpus(const CorpusSpec& spec);

// Label-free view for training code: pointers into the corpus, in order.
std::vector<const Volume*> training_view(const Corpus& corpus);

// Probe-facing label list, aligned with training_view order.
std::vector<int> corpus_labels(const Corpus& corpus);

// The class parameters, exposed so tests can pin the construction.
double class_base_intensity(const CorpusSpec& spec, int label);

}  // namespace vcsl
