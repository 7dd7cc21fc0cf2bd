#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "vcsl/probe.hpp"
#include "vcsl/rng.hpp"

using vcsl::Corpus;
using vcsl::CorpusSpec;
using vcsl::ModelConfig;
using vcsl::ModelState;
using vcsl::ProbeReport;
using vcsl::Rng;
using vcsl::Volume;

namespace {

// `per_class` copies of each one-hot indicator row, labels round-robin.
void one_hot_problem(int classes, int per_class,
                     std::vector<std::vector<double>>& x,
                     std::vector<int>& y) {
  x.clear();
  y.clear();
  for (int i = 0; i < classes * per_class; ++i) {
    const int label = i % classes;
    std::vector<double> row(static_cast<size_t>(classes), 0.0);
    row[static_cast<size_t>(label)] = 1.0;
    x.push_back(std::move(row));
    y.push_back(label);
  }
}

// Label-free gaussian rows: nothing for the probe to latch onto.
std::vector<std::vector<double>> noise_rows(int count, int dim,
                                            uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> x;
  for (int i = 0; i < count; ++i) {
    std::vector<double> row(static_cast<size_t>(dim));
    for (double& v : row) v = rng.gaussian();
    x.push_back(std::move(row));
  }
  return x;
}

ModelConfig probe_model() {
  ModelConfig cfg;
  cfg.encoder.input_extent = 8;
  cfg.encoder.channels = {4, 8};
  cfg.encoder.taps = 2;
  cfg.encoder.feature_dim = 8;
  cfg.encoder.embed_dim = 8;
  cfg.attention.blocks = 2;
  cfg.attention.heads = 2;
  cfg.attention.head_dim = 4;
  cfg.attention.offset_groups = 1;
  cfg.attention.feature_dim = 8;
  cfg.attention.embed_dim = 8;
  cfg.attention.downsample = 2;
  cfg.attention.max_seq = 8;
  cfg.prototypes = 5;
  cfg.max_slices = 8;
  return cfg;
}

Corpus probe_corpus() {
  CorpusSpec spec;
  spec.datasets = 1;
  spec.volumes_each = 6;
  spec.depth = 4;
  spec.extent = 8;
  spec.classes = 2;
  spec.seed = 21;
  return vcsl::generate_corpus(spec);
}

}  // namespace

TEST_SUITE("probe") {
  TEST_CASE("separable one-hot embeddings are classified perfectly") {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    one_hot_problem(4, 40, x, y);
    const ProbeReport r = vcsl::linear_probe(x, y, 5, "onehot");
    CHECK(r.accuracy == 1.0);
    CHECK(r.chance == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r.train_count == 112);  // ceil(0.7 * 160)
    CHECK(r.eval_count == 48);
    CHECK(r.source == "onehot");
    // Perfect accuracy means a diagonal confusion matrix.
    for (size_t t = 0; t < r.confusion.size(); ++t)
      for (size_t p = 0; p < r.confusion[t].size(); ++p)
        if (t != p) CHECK(r.confusion[t][p] == 0);
  }

  TEST_CASE("shuffled labels score near chance") {
    // Informative rows, but the labels are decoupled by a fresh shuffle:
    // held-out accuracy must sit in a +-0.1 band around 1/4.
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    one_hot_problem(4, 200, x, y);
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      std::vector<int> shuffled = y;
      Rng rng(seed * 101);
      rng.shuffle(shuffled);
      const ProbeReport r = vcsl::linear_probe(x, shuffled, seed);
      INFO("seed ", seed, " accuracy ", r.accuracy);
      CHECK(r.accuracy > 0.15);
      CHECK(r.accuracy < 0.35);
    }
  }

  TEST_CASE("label-free gaussian embeddings stay below 0.45") {
    std::vector<int> y;
    for (int i = 0; i < 400; ++i) y.push_back(i % 4);
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      const auto x = noise_rows(400, 16, seed * 977);
      const ProbeReport r = vcsl::linear_probe(x, y, seed);
      INFO("seed ", seed, " accuracy ", r.accuracy);
      CHECK(r.accuracy < 0.45);
    }
  }

  TEST_CASE("reports are a pure function of inputs and seed") {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    one_hot_problem(3, 20, x, y);
    const ProbeReport a = vcsl::linear_probe(x, y, 42, "volume");
    const ProbeReport b = vcsl::linear_probe(x, y, 42, "volume");
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.train_count == b.train_count);
    CHECK(a.eval_count == b.eval_count);
    CHECK(a.confusion == b.confusion);
    CHECK(probe_report_json(a) == probe_report_json(b));
  }

  TEST_CASE("confusion counts account for every held-out sample") {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    one_hot_problem(4, 50, x, y);
    for (uint64_t seed : {1ull, 9ull, 33ull}) {
      const ProbeReport r = vcsl::linear_probe(x, y, seed);
      REQUIRE(r.confusion.size() == 4);
      int total = 0, diag = 0;
      for (size_t t = 0; t < 4; ++t) {
        REQUIRE(r.confusion[t].size() == 4);
        for (size_t p = 0; p < 4; ++p) {
          CHECK(r.confusion[t][p] >= 0);
          total += r.confusion[t][p];
          if (t == p) diag += r.confusion[t][p];
        }
      }
      CHECK(total == r.eval_count);
      CHECK(r.train_count + r.eval_count == 200);
      CHECK(r.accuracy ==
            doctest::Approx(double(diag) / r.eval_count).epsilon(1e-15));
    }
  }

  TEST_CASE("rejects degenerate probe problems") {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    one_hot_problem(2, 20, x, y);

    CHECK_THROWS_WITH(vcsl::linear_probe({}, {}, 0),
                      "linear_probe: no embeddings");
    {
      auto bad = y;
      bad.pop_back();
      CHECK_THROWS_WITH(vcsl::linear_probe(x, bad, 0),
                        "linear_probe: 40 embeddings vs 39 labels");
    }
    {
      auto ragged = x;
      ragged[3].push_back(0.0);
      CHECK_THROWS_WITH(vcsl::linear_probe(ragged, y, 0),
                        "linear_probe: ragged embedding widths");
    }
    {
      auto bad = y;
      bad[0] = -1;
      CHECK_THROWS_WITH(vcsl::linear_probe(x, bad, 0),
                        "linear_probe: negative label");
    }
    {
      std::vector<int> ones(y.size(), 0);
      CHECK_THROWS_WITH(vcsl::linear_probe(x, ones, 0),
                        "linear_probe: need at least two classes, got 1");
    }
    {
      // Class 2 appears exactly once: below the 10-sample floor.
      auto xs = x;
      auto ys = y;
      xs.push_back(std::vector<double>(2, 0.5));
      ys.push_back(2);
      CHECK_THROWS_WITH(vcsl::linear_probe(xs, ys, 0),
                        "linear_probe: class 2 has 1 samples; need at least "
                        "10");
    }
  }

  TEST_CASE("report json round-trips through a parser") {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    one_hot_problem(3, 30, x, y);
    const ProbeReport r = vcsl::linear_probe(x, y, 7, "slice");
    const nlohmann::json j = nlohmann::json::parse(probe_report_json(r));
    CHECK(j.at("source").get<std::string>() == "slice");
    CHECK(j.at("accuracy").get<double>() == r.accuracy);
    CHECK(j.at("chance").get<double>() == r.chance);
    CHECK(j.at("train_count").get<int>() == r.train_count);
    CHECK(j.at("eval_count").get<int>() == r.eval_count);
    CHECK(j.at("seed").get<uint64_t>() == 7);
    const auto conf = j.at("confusion");
    REQUIRE(conf.size() == r.confusion.size());
    for (size_t t = 0; t < conf.size(); ++t)
      for (size_t p = 0; p < conf[t].size(); ++p)
        CHECK(conf[t][p].get<int>() == r.confusion[t][p]);
  }

  TEST_CASE("volume and slice embedding sweeps are frozen and unit-norm") {
    ModelState st = vcsl::make_model_state(probe_model(), 77);
    const Corpus corpus = probe_corpus();
    const auto views = vcsl::training_view(corpus);

    // Snapshot every parameter before embedding.
    std::vector<std::vector<double>> before;
    st.for_each([&](vcsl::Param& p) { before.push_back(p.v); });

    const auto vols = vcsl::embed_volumes(st, views);
    const auto slices = vcsl::embed_slices(st, views);

    size_t k = 0;
    st.for_each([&](vcsl::Param& p) { CHECK(p.v == before[k++]); });

    REQUIRE(vols.size() == corpus.size());
    REQUIRE(slices.size() == corpus.size() * 4);
    for (const auto& row : vols) {
      REQUIRE(row.size() == 8);
      double n2 = 0.0;
      for (double v : row) n2 += v * v;
      CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-9);
    }
    for (const auto& row : slices) {
      REQUIRE(row.size() == 8);
      double n2 = 0.0;
      for (double v : row) n2 += v * v;
      CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-9);
    }

    // Re-running produces bit-identical embeddings: no hidden state.
    CHECK(vcsl::embed_volumes(st, views) == vols);
  }

  TEST_CASE("slice labels repeat each volume label depth times") {
    const std::vector<int> labels = {0, 3, 1};
    const std::vector<int> expanded = vcsl::slice_labels(labels, 2);
    CHECK(expanded == std::vector<int>{0, 0, 3, 3, 1, 1});
    CHECK_THROWS_WITH(vcsl::slice_labels(labels, 0),
                      "slice_labels: depth must be positive");
  }

  TEST_CASE("probing corpus labels end to end") {
    // Untrained but deterministic backbone embeddings, real labels: the
    // report must be well-formed whatever the accuracy.
    ModelState st = vcsl::make_model_state(probe_model(), 31);
    CorpusSpec spec;
    spec.datasets = 1;
    spec.volumes_each = 24;
    spec.depth = 4;
    spec.extent = 8;
    spec.classes = 2;
    spec.seed = 5;
    const Corpus corpus = vcsl::generate_corpus(spec);
    const auto views = vcsl::training_view(corpus);
    const auto labels = vcsl::corpus_labels(corpus);

    const auto emb = vcsl::embed_volumes(st, views);
    const ProbeReport r = vcsl::linear_probe(emb, labels, 3, "volume");
    CHECK(r.chance == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r.eval_count == 7);  // 24 - ceil(0.7 * 24)
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
  }
}
