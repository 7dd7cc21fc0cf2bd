#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "vcsl/encoder.hpp"

namespace ad = vcsl::ad;
using vcsl::Binder;
using vcsl::EncoderConfig;
using vcsl::EncoderParams;
using vcsl::Param;
using vcsl::Rng;
using vcsl::Slice;
using vcsl::Volume;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.input_extent = 8;
  cfg.channels = {2, 3};
  cfg.taps = 2;
  cfg.feature_dim = 4;
  cfg.embed_dim = 3;
  return cfg;
}

Slice random_slice(int extent, uint64_t seed) {
  Rng rng(seed);
  Slice s = Slice::zeros(extent);
  for (double& v : s.v) v = rng.uniform();
  return s;
}

// Straight nested-loop reimplementation of the conv stack used as an oracle:
// channels-last tensors, explicit padding, no autodiff machinery.
struct OracleStage {
  std::vector<double> data;  // [e x e x c]
  int extent = 0;
  int ch = 0;
};

OracleStage oracle_conv(const OracleStage& in, const Param& w, const Param& b,
                        int c_out) {
  const int e_out = (in.extent - 1) / 2 + 1;
  OracleStage out{std::vector<double>(
                      static_cast<size_t>(e_out) * e_out * c_out, 0.0),
                  e_out, c_out};
  for (int oy = 0; oy < e_out; ++oy)
    for (int ox = 0; ox < e_out; ++ox)
      for (int co = 0; co < c_out; ++co) {
        double acc = b.v[static_cast<size_t>(co)];
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = 2 * oy - 1 + ky;
            const int ix = 2 * ox - 1 + kx;
            if (iy < 0 || iy >= in.extent || ix < 0 || ix >= in.extent)
              continue;
            for (int ci = 0; ci < in.ch; ++ci) {
              const double pix =
                  in.data[(static_cast<size_t>(iy) * in.extent + ix) * in.ch +
                          ci];
              const double weight =
                  w.v[static_cast<size_t>((ky * 3 + kx) * in.ch + ci) * c_out +
                      co];
              acc += pix * weight;
            }
          }
        out.data[(static_cast<size_t>(oy) * e_out + ox) * c_out + co] =
            std::tanh(acc);
      }
  return out;
}

std::vector<double> oracle_pool(const OracleStage& s) {
  std::vector<double> pooled(static_cast<size_t>(s.ch), 0.0);
  const int spatial = s.extent * s.extent;
  for (int p = 0; p < spatial; ++p)
    for (int c = 0; c < s.ch; ++c)
      pooled[static_cast<size_t>(c)] +=
          s.data[static_cast<size_t>(p) * s.ch + c];
  for (double& x : pooled) x /= spatial;
  return pooled;
}

std::vector<double> oracle_project(const std::vector<double>& in,
                                   const Param& w, const Param* b) {
  std::vector<double> out(static_cast<size_t>(w.cols), 0.0);
  for (int j = 0; j < w.cols; ++j) {
    double acc = b != nullptr ? b->v[static_cast<size_t>(j)] : 0.0;
    for (int i = 0; i < w.rows; ++i)
      acc += in[static_cast<size_t>(i)] *
             w.v[static_cast<size_t>(i) * w.cols + j];
    out[static_cast<size_t>(j)] = acc;
  }
  return out;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("im2col indices for a 2x2 single-channel map") {
  const auto& idx = vcsl::im2col_indices(2, 2, 1);
  const std::vector<int64_t> expect = {-1, -1, -1, -1, 0, 1, -1, 2, 3};
  CHECK(idx == expect);
}

TEST_CASE("embedding is unit-norm and deterministic across graphs") {
  EncoderConfig cfg = tiny_config();
  Rng rng(7);
  EncoderParams params = make_encoder_params(cfg, rng);
  const Slice s = random_slice(8, 21);

  std::vector<double> first;
  for (int rep = 0; rep < 2; ++rep) {
    ad::Graph g;
    Binder binder(g);
    auto enc = bind_encoder(g, binder, params, cfg, true);
    auto z = encode_slice(g, enc, s);
    CHECK(z.rows() == 1);
    CHECK(z.cols() == cfg.embed_dim);
    double sq = 0.0;
    for (double v : z.values()) sq += v * v;
    CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-12);
    if (rep == 0)
      first = z.values();
    else
      CHECK(first == z.values());  // bit-identical rebuild
  }
}

TEST_CASE("graph encoder matches a nested-loop oracle") {
  EncoderConfig cfg = tiny_config();
  Rng rng(11);
  EncoderParams params = make_encoder_params(cfg, rng);
  // Non-zero biases exercise every term in the oracle.
  {
    Rng brng(55);
    for (auto& b : params.conv_b)
      for (double& x : b.v) x = brng.uniform(-0.2, 0.2);
    for (auto& b : params.tap_b)
      for (double& x : b.v) x = brng.uniform(-0.2, 0.2);
  }
  const Slice s = random_slice(8, 22);

  // Oracle pipeline.
  OracleStage stage{s.v, 8, 1};
  std::vector<OracleStage> stages;
  for (int i = 0; i < cfg.stages(); ++i) {
    stage = oracle_conv(stage, params.conv_w[static_cast<size_t>(i)],
                        params.conv_b[static_cast<size_t>(i)],
                        cfg.channels[static_cast<size_t>(i)]);
    stages.push_back(stage);
  }
  auto z_expect = oracle_project(oracle_pool(stages.back()), params.embed_w,
                                 nullptr);
  double norm = 0.0;
  for (double v : z_expect) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : z_expect) v /= norm;

  ad::Graph g;
  Binder binder(g);
  auto enc = bind_encoder(g, binder, params, cfg, true);
  auto z = encode_slice(g, enc, s);
  REQUIRE(z.values().size() == z_expect.size());
  for (size_t i = 0; i < z_expect.size(); ++i)
    CHECK(z.values()[i] == doctest::Approx(z_expect[i]).epsilon(1e-10));

  // Volume feature rows: slice-major, tapped stages in order.
  Volume vol = Volume::zeros(8, 2);
  for (int i = 0; i < 2; ++i) {
    const Slice sl = random_slice(8, 30 + static_cast<uint64_t>(i));
    std::copy(sl.v.begin(), sl.v.end(),
              vol.v.begin() + static_cast<size_t>(i) * vol.slice_pixels());
  }
  ad::Graph g2;
  Binder binder2(g2);
  auto enc2 = bind_encoder(g2, binder2, params, cfg, true);
  auto rows = encode_volume_rows(g2, enc2, vol);
  CHECK(rows.rows() == 2 * cfg.taps);
  CHECK(rows.cols() == cfg.feature_dim);

  for (int i = 0; i < 2; ++i) {
    OracleStage st{std::vector<double>(vol.slice_span(i).begin(),
                                       vol.slice_span(i).end()),
                   8, 1};
    std::vector<OracleStage> sl_stages;
    for (int sidx = 0; sidx < cfg.stages(); ++sidx) {
      st = oracle_conv(st, params.conv_w[static_cast<size_t>(sidx)],
                       params.conv_b[static_cast<size_t>(sidx)],
                       cfg.channels[static_cast<size_t>(sidx)]);
      sl_stages.push_back(st);
    }
    const int first_tap = cfg.stages() - cfg.taps;
    for (int t = 0; t < cfg.taps; ++t) {
      const auto row = oracle_project(
          oracle_pool(sl_stages[static_cast<size_t>(first_tap + t)]),
          params.tap_w[static_cast<size_t>(t)],
          &params.tap_b[static_cast<size_t>(t)]);
      for (int j = 0; j < cfg.feature_dim; ++j) {
        const double got =
            rows.values()[static_cast<size_t>(i * cfg.taps + t) *
                              cfg.feature_dim +
                          j];
        CHECK(got == doctest::Approx(row[static_cast<size_t>(j)])
                         .epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("encoder parameters pass finite-difference checks") {
  EncoderConfig cfg = tiny_config();
  Rng rng(13);
  EncoderParams params = make_encoder_params(cfg, rng);
  const Slice s = random_slice(8, 40);

  ad::Graph g;
  Binder binder(g);
  auto enc = bind_encoder(g, binder, params, cfg, true);
  auto z = encode_slice(g, enc, s);
  auto w = g.constant(1, cfg.embed_dim,
                      std::vector<double>{0.4, -1.1, 0.7});
  auto loss = g.reduce_sum(g.mul(z, w));

  CHECK(ad::check_gradient(g, loss, binder.tensor_of(params.conv_w[0]), 1e-5) <
        1e-6);
  CHECK(ad::check_gradient(g, loss, binder.tensor_of(params.conv_b[1]), 1e-5) <
        1e-6);
  CHECK(ad::check_gradient(g, loss, binder.tensor_of(params.embed_w), 1e-5) <
        1e-6);

  // Volume rows: gradients reach tap projections too.
  Volume vol = Volume::zeros(8, 2);
  Rng vr(41);
  for (double& x : vol.v) x = vr.uniform();
  ad::Graph g2;
  Binder binder2(g2);
  auto enc2 = bind_encoder(g2, binder2, params, cfg, true);
  auto rows = encode_volume_rows(g2, enc2, vol);
  auto w2 = g2.constant(rows.rows(), rows.cols(),
                        [&] {
                          Rng r(42);
                          std::vector<double> v(rows.size());
                          for (auto& x : v) x = r.uniform(0.1, 1.0);
                          return v;
                        }());
  auto loss2 = g2.reduce_sum(g2.mul(rows, w2));
  CHECK(ad::check_gradient(g2, loss2, binder2.tensor_of(params.tap_w[0]),
                           1e-5) < 1e-6);
  CHECK(ad::check_gradient(g2, loss2, binder2.tensor_of(params.tap_b[1]),
                           1e-5) < 1e-6);
  CHECK(ad::check_gradient(g2, loss2, binder2.tensor_of(params.conv_w[0]),
                           1e-5) < 1e-6);
}

TEST_CASE("an all-zero slice cannot be embedded") {
  EncoderConfig cfg = tiny_config();
  Rng rng(17);
  EncoderParams params = make_encoder_params(cfg, rng);
  // zero biases (the default) keep the pre-normalization feature at zero
  ad::Graph g;
  Binder binder(g);
  auto enc = bind_encoder(g, binder, params, cfg, true);
  CHECK_THROWS_AS((void)encode_slice(g, enc, Slice::zeros(8)), ad::AdError);
}

TEST_CASE("extent mismatches and bad configs are rejected") {
  EncoderConfig cfg = tiny_config();
  Rng rng(19);
  EncoderParams params = make_encoder_params(cfg, rng);
  ad::Graph g;
  Binder binder(g);
  auto enc = bind_encoder(g, binder, params, cfg, true);
  CHECK_THROWS_AS((void)encode_slice(g, enc, random_slice(16, 1)),
                  std::runtime_error);

  EncoderConfig bad = tiny_config();
  bad.taps = 5;
  CHECK_THROWS_AS(bad.validate(), std::runtime_error);
  bad = tiny_config();
  bad.input_extent = 10;  // 10 -> 5: does not halve twice
  CHECK_THROWS_AS(bad.validate(), std::runtime_error);
  bad = tiny_config();
  bad.channels.clear();
  CHECK_THROWS_AS(bad.validate(), std::runtime_error);
}

TEST_CASE("frozen binding blocks parameter gradients") {
  EncoderConfig cfg = tiny_config();
  Rng rng(23);
  EncoderParams params = make_encoder_params(cfg, rng);
  const Slice s = random_slice(8, 50);

  ad::Graph g;
  Binder binder(g);
  auto enc = bind_encoder(g, binder, params, cfg, /*trainable=*/false);
  auto z = encode_slice(g, enc, s);
  CHECK_FALSE(z.requires_grad());
}

}  // TEST_SUITE
