#include "vcsl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vcsl/rng.hpp"

namespace vcsl {

void CorpusSpec::validate() const {
  if (datasets < 1)
    throw std::runtime_error("CorpusSpec: datasets must be positive, got " +
                             std::to_string(datasets));
  if (!volumes.empty() && volumes.size() != static_cast<size_t>(datasets))
    throw std::runtime_error("CorpusSpec: got " +
                             std::to_string(volumes.size()) +
                             " per-dataset counts for " +
                             std::to_string(datasets) + " datasets");
  for (size_t d = 0; d < volumes.size(); ++d)
    if (volumes[d] < 1)
      throw std::runtime_error("CorpusSpec: dataset " + std::to_string(d) +
                               " volume count must be positive, got " +
                               std::to_string(volumes[d]));
  if (volumes.empty() && volumes_each < 1)
    throw std::runtime_error("CorpusSpec: volumes_each must be positive, got " +
                             std::to_string(volumes_each));
  if (depth < 4)
    throw std::runtime_error("CorpusSpec: depth must be at least 4, got " +
                             std::to_string(depth));
  if (extent < 8)
    throw std::runtime_error("CorpusSpec: extent must be at least 8, got " +
                             std::to_string(extent));
  if (classes < 2)
    throw std::runtime_error("CorpusSpec: classes must be at least 2, got " +
                             std::to_string(classes));
  if (pattern != "waves" && pattern != "constant")
    throw std::runtime_error("CorpusSpec: unknown pattern '" + pattern +
                             "' (expected 'waves' or 'constant')");
  if (noise < 0.0)
    throw std::runtime_error("CorpusSpec: noise must be non-negative, got " +
                             std::to_string(noise));
}

double class_base_intensity(const CorpusSpec& spec, int label) {
  const double t = static_cast<double>(label) / (spec.classes - 1);
  return spec.pattern == "constant" ? 0.2 + 0.6 * t : 0.3 + 0.4 * t;
}

namespace {

// One volume of class `label`: textured sinusoid or flat field plus noise.
Volume render_volume(const CorpusSpec& spec, int label, uint64_t seed) {
  Rng rng(seed);
  Volume vol = Volume::zeros(spec.extent, spec.depth);
  const double base = class_base_intensity(spec, label);
  const double freq = 1.0 + label % 4;
  const double angle = (label % 4) * (kTwoPi / 8.0);  // 0/45/90/135 degrees
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double phase = rng.uniform(0.0, kTwoPi);
  const bool waves = spec.pattern == "waves";
  size_t at = 0;
  for (int i = 0; i < spec.depth; ++i) {
    // Small phase drift keeps neighbouring slices nearly identical while the
    // whole stack still sweeps a visible range.
    const double drift = phase + 0.2 * i;
    for (int y = 0; y < spec.extent; ++y)
      for (int x = 0; x < spec.extent; ++x) {
        double v = base;
        if (waves)
          v += 0.2 * std::sin(kTwoPi * freq * (x * ca + y * sa) / spec.extent +
                              drift);
        v += spec.noise * rng.gaussian();
        vol.v[at++] = std::clamp(v, 0.0, 1.0);
      }
  }
  return vol;
}

}  // namespace

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  Corpus corpus;
  corpus.spec = spec;
  corpus.items.reserve(static_cast<size_t>(spec.total()));
  for (int d = 0; d < spec.datasets; ++d) {
    for (int i = 0; i < spec.count(d); ++i) {
      TaggedVolume item;
      item.dataset = d;
      // Round-robin within each dataset keeps the classes balanced.
      item.label = i % spec.classes;
      item.volume = render_volume(
          spec, item.label,
          derive_seed(spec.seed, static_cast<uint64_t>(d),
                      static_cast<uint64_t>(i)));
      corpus.items.push_back(std::move(item));
    }
  }
  return corpus;
}

std::vector<const Volume*> training_view(const Corpus& corpus) {
  std::vector<const Volume*> view;
  view.reserve(corpus.items.size());
  for (const TaggedVolume& item : corpus.items) view.push_back(&item.volume);
  return view;
}

std::vector<int> corpus_labels(const Corpus& corpus) {
  std::vector<int> labels;
  labels.reserve(corpus.items.size());
  for (const TaggedVolume& item : corpus.items) labels.push_back(item.label);
  return labels;
}

}  // namespace vcsl
