#include "vcsl/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "vcsl/rng.hpp"

namespace vcsl {

namespace {

constexpr int kProbeRounds = 300;
constexpr double kProbeRate = 0.5;

// argmax with first-index tie-breaking, so scoring is deterministic.
int argmax(std::span<const double> v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
  return best;
}

}  // namespace

ProbeReport linear_probe(const std::vector<std::vector<double>>& embeddings,
                         const std::vector<int>& labels, uint64_t seed,
                         std::string source) {
  if (embeddings.empty())
    throw std::runtime_error("linear_probe: no embeddings");
  if (embeddings.size() != labels.size())
    throw std::runtime_error("linear_probe: " +
                             std::to_string(embeddings.size()) +
                             " embeddings vs " + std::to_string(labels.size()) +
                             " labels");
  const size_t dim = embeddings.front().size();
  if (dim == 0) throw std::runtime_error("linear_probe: empty embedding");
  for (const auto& e : embeddings)
    if (e.size() != dim)
      throw std::runtime_error("linear_probe: ragged embedding widths");

  int classes = 0;
  for (int y : labels) {
    if (y < 0) throw std::runtime_error("linear_probe: negative label");
    classes = std::max(classes, y + 1);
  }
  std::vector<int> per_class(static_cast<size_t>(classes), 0);
  for (int y : labels) per_class[static_cast<size_t>(y)] += 1;
  if (classes < 2)
    throw std::runtime_error("linear_probe: need at least two classes, got " +
                             std::to_string(classes));
  for (int c = 0; c < classes; ++c)
    if (per_class[static_cast<size_t>(c)] < 10)
      throw std::runtime_error("linear_probe: class " + std::to_string(c) +
                               " has " +
                               std::to_string(per_class[static_cast<size_t>(c)]) +
                               " samples; need at least 10");

  // Seeded 70/30 split.
  const int total = static_cast<int>(embeddings.size());
  std::vector<int> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const int train_count =
      static_cast<int>(std::ceil(0.7 * static_cast<double>(total)));
  const int eval_count = total - train_count;
  if (eval_count < 1)
    throw std::runtime_error("linear_probe: evaluation split is empty");

  // Full-batch multinomial logistic regression, zero-initialized weights
  // [classes x dim] plus a bias per class.
  std::vector<double> w(static_cast<size_t>(classes) * dim, 0.0);
  std::vector<double> b(static_cast<size_t>(classes), 0.0);
  std::vector<double> logits(static_cast<size_t>(classes));
  std::vector<double> gw(w.size());
  std::vector<double> gb(b.size());
  for (int round = 0; round < kProbeRounds; ++round) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (int t = 0; t < train_count; ++t) {
      const int idx = order[static_cast<size_t>(t)];
      const auto& x = embeddings[static_cast<size_t>(idx)];
      double peak = -1e300;
      for (int c = 0; c < classes; ++c) {
        double dot = b[static_cast<size_t>(c)];
        for (size_t j = 0; j < dim; ++j)
          dot += w[static_cast<size_t>(c) * dim + j] * x[j];
        logits[static_cast<size_t>(c)] = dot;
        peak = std::max(peak, dot);
      }
      double norm = 0.0;
      for (int c = 0; c < classes; ++c) {
        logits[static_cast<size_t>(c)] =
            std::exp(logits[static_cast<size_t>(c)] - peak);
        norm += logits[static_cast<size_t>(c)];
      }
      for (int c = 0; c < classes; ++c) {
        const double p = logits[static_cast<size_t>(c)] / norm;
        const double delta =
            p - (c == labels[static_cast<size_t>(idx)] ? 1.0 : 0.0);
        gb[static_cast<size_t>(c)] += delta;
        for (size_t j = 0; j < dim; ++j)
          gw[static_cast<size_t>(c) * dim + j] += delta * x[j];
      }
    }
    const double scale = kProbeRate / train_count;
    for (size_t i = 0; i < w.size(); ++i) w[i] -= scale * gw[i];
    for (size_t i = 0; i < b.size(); ++i) b[i] -= scale * gb[i];
  }

  ProbeReport report;
  report.chance = 1.0 / classes;
  report.source = std::move(source);
  report.seed = seed;
  report.train_count = train_count;
  report.eval_count = eval_count;
  report.confusion.assign(static_cast<size_t>(classes),
                          std::vector<int>(static_cast<size_t>(classes), 0));
  int correct = 0;
  for (int t = train_count; t < total; ++t) {
    const int idx = order[static_cast<size_t>(t)];
    const auto& x = embeddings[static_cast<size_t>(idx)];
    for (int c = 0; c < classes; ++c) {
      double dot = b[static_cast<size_t>(c)];
      for (size_t j = 0; j < dim; ++j)
        dot += w[static_cast<size_t>(c) * dim + j] * x[j];
      logits[static_cast<size_t>(c)] = dot;
    }
    const int predicted = argmax(logits);
    const int truth = labels[static_cast<size_t>(idx)];
    report.confusion[static_cast<size_t>(truth)][static_cast<size_t>(
        predicted)] += 1;
    if (predicted == truth) correct += 1;
  }
  report.accuracy = static_cast<double>(correct) / eval_count;
  return report;
}

std::string probe_report_json(const ProbeReport& report) {
  std::string out = "{\"source\":\"" + report.source + "\",";
  char buf[96];
  std::snprintf(buf, sizeof buf, "\"accuracy\":%.17g,\"chance\":%.17g,",
                report.accuracy, report.chance);
  out += buf;
  std::snprintf(buf, sizeof buf,
                "\"train_count\":%d,\"eval_count\":%d,\"seed\":%llu,",
                report.train_count, report.eval_count,
                static_cast<unsigned long long>(report.seed));
  out += buf;
  out += "\"confusion\":[";
  for (size_t r = 0; r < report.confusion.size(); ++r) {
    out += r == 0 ? "[" : ",[";
    for (size_t c = 0; c < report.confusion[r].size(); ++c) {
      if (c > 0) out += ",";
      out += std::to_string(report.confusion[r][c]);
    }
    out += "]";
  }
  out += "]}";
  return out;
}

std::vector<std::vector<double>> embed_volumes(
    ModelState& state, std::span<const Volume* const> volumes) {
  std::vector<std::vector<double>> out;
  out.reserve(volumes.size());
  for (const Volume* vol : volumes) {
    ad::Graph g;
    Binder binder(g);
    BoundEncoder enc =
        bind_encoder(g, binder, state.encoder, state.cfg.encoder, false);
    BoundAttention stack =
        bind_attention(g, binder, state.attention, state.cfg.attention, false);
    out.push_back(
        volume_embed(g, stack, encode_volume_rows(g, enc, *vol))
            .embedding.values());
  }
  return out;
}

std::vector<std::vector<double>> embed_slices(
    ModelState& state, std::span<const Volume* const> volumes) {
  std::vector<std::vector<double>> out;
  for (const Volume* vol : volumes) {
    ad::Graph g;
    Binder binder(g);
    BoundEncoder enc =
        bind_encoder(g, binder, state.encoder, state.cfg.encoder, false);
    for (int i = 0; i < vol->depth; ++i)
      out.push_back(
          encode_slice(g, enc, vol->slice_span(i), vol->extent).values());
  }
  return out;
}

std::vector<int> slice_labels(std::span<const int> volume_labels, int depth) {
  if (depth < 1)
    throw std::runtime_error("slice_labels: depth must be positive");
  std::vector<int> out;
  out.reserve(volume_labels.size() * static_cast<size_t>(depth));
  for (int y : volume_labels)
    for (int i = 0; i < depth; ++i) out.push_back(y);
  return out;
}

}  // namespace vcsl
