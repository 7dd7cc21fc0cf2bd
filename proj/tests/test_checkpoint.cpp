#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "vcsl/checkpoint.hpp"
#include "vcsl/rng.hpp"

using vcsl::CheckpointMeta;
using vcsl::ModelConfig;
using vcsl::ModelState;
using vcsl::Rng;

namespace {

ModelConfig small_model() {
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

// Scratch file under the system temp dir, removed when the guard dies.
struct TempFile {
  std::string path;
  explicit TempFile(const std::string& tag) {
    path = (std::filesystem::temp_directory_path() /
            ("vcsl_ckpt_" + tag + ".bin"))
               .string();
  }
  ~TempFile() { std::remove(path.c_str()); }
};

// Bitwise equality: distinguishes -0.0 from 0.0 and survives subnormals.
bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<uint64_t>(a[i]) != std::bit_cast<uint64_t>(b[i]))
      return false;
  return true;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("round-trip restores every parameter bit-exactly") {
    ModelState src = vcsl::make_model_state(small_model(), 404);
    Rng rng(92);
    src.for_each([&](vcsl::Param& p) {
      for (double& v : p.v) v = rng.uniform(-2.0, 2.0);
    });
    // Plant awkward bit patterns: signed zero, a subnormal, a huge value.
    src.prototypes.v[0] = -0.0;
    src.prototypes.v[1] = 5e-324;
    src.prototypes.v[2] = 1.5e308;
    src.stage_cursor = 2;
    src.epoch_cursor = 7;

    TempFile file("roundtrip");
    vcsl::save_checkpoint(file.path, src, 12345);

    // A fresh state from a different seed starts with different values.
    ModelState dst = vcsl::make_model_state(small_model(), 505);
    const CheckpointMeta meta = vcsl::load_checkpoint(file.path, dst);
    CHECK(meta.corpus_seed == 12345);
    CHECK(meta.init_seed == 404);
    CHECK(meta.stage == 2);
    CHECK(meta.epoch == 7);
    CHECK(dst.stage_cursor == 2);
    CHECK(dst.epoch_cursor == 7);

    std::vector<const vcsl::Param*> a, b;
    src.for_each([&](const vcsl::Param& p) { a.push_back(&p); });
    dst.for_each([&](const vcsl::Param& p) { b.push_back(&p); });
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      INFO("parameter ", a[i]->name);
      CHECK(a[i]->name == b[i]->name);
      CHECK(bits_equal(a[i]->v, b[i]->v));
    }
  }

  TEST_CASE("save-load-save produces byte-identical files") {
    ModelState st = vcsl::make_model_state(small_model(), 11);
    Rng rng(3);
    st.for_each([&](vcsl::Param& p) {
      for (double& v : p.v) v += rng.gaussian();
    });
    TempFile first("first"), second("second");
    vcsl::save_checkpoint(first.path, st, 777);

    ModelState re = vcsl::make_model_state(small_model(), 99);
    vcsl::load_checkpoint(first.path, re);
    vcsl::save_checkpoint(second.path, re, 777);
    CHECK(read_bytes(first.path) == read_bytes(second.path));
  }

  TEST_CASE("header metadata is readable without loading") {
    ModelState st = vcsl::make_model_state(small_model(), 8);
    st.stage_cursor = 3;
    st.epoch_cursor = 49;
    TempFile file("meta");
    vcsl::save_checkpoint(file.path, st, 31337);
    const CheckpointMeta meta = vcsl::read_checkpoint_meta(file.path);
    CHECK(meta.corpus_seed == 31337);
    CHECK(meta.init_seed == 8);
    CHECK(meta.stage == 3);
    CHECK(meta.epoch == 49);
  }

  TEST_CASE("refuses foreign or damaged files") {
    ModelState st = vcsl::make_model_state(small_model(), 1);

    SUBCASE("missing file") {
      CHECK_THROWS_WITH(vcsl::read_checkpoint_meta("/nonexistent/x.bin"),
                        "checkpoint: cannot open '/nonexistent/x.bin' for "
                        "reading");
    }
    SUBCASE("bad magic") {
      TempFile file("magic");
      std::ofstream(file.path, std::ios::binary) << "JUNKJUNKJUNKJUNK";
      CHECK_THROWS_WITH(
          vcsl::load_checkpoint(file.path, st),
          ("checkpoint: '" + file.path + "' is not a checkpoint (bad magic)")
              .c_str());
    }
    SUBCASE("version mismatch") {
      TempFile file("version");
      vcsl::save_checkpoint(file.path, st, 0);
      std::string bytes = read_bytes(file.path);
      bytes[4] = 9;  // bump the little-endian version field
      std::ofstream(file.path, std::ios::binary) << bytes;
      CHECK_THROWS_WITH(vcsl::load_checkpoint(file.path, st),
                        "checkpoint: format version 9 is not supported "
                        "(expected 1)");
    }
    SUBCASE("truncated payload") {
      TempFile file("trunc");
      vcsl::save_checkpoint(file.path, st, 0);
      std::string bytes = read_bytes(file.path);
      bytes.resize(bytes.size() / 2);
      std::ofstream(file.path, std::ios::binary) << bytes;
      CHECK_THROWS_WITH(vcsl::load_checkpoint(file.path, st),
                        ("checkpoint: '" + file.path + "' is truncated")
                            .c_str());
    }
    SUBCASE("trailing bytes") {
      TempFile file("trail");
      vcsl::save_checkpoint(file.path, st, 0);
      std::ofstream(file.path, std::ios::binary | std::ios::app) << "xx";
      CHECK_THROWS_WITH(vcsl::load_checkpoint(file.path, st),
                        ("checkpoint: trailing bytes after '" + file.path +
                         "' payload")
                            .c_str());
    }
  }

  TEST_CASE("rejects a checkpoint from a different model shape") {
    ModelState src = vcsl::make_model_state(small_model(), 4);
    TempFile file("shape");
    vcsl::save_checkpoint(file.path, src, 0);

    SUBCASE("prototype bank resized") {
      ModelConfig other = small_model();
      other.prototypes = 7;
      ModelState dst = vcsl::make_model_state(other, 4);
      CHECK_THROWS_WITH(vcsl::load_checkpoint(file.path, dst),
                        "checkpoint: parameter 'prototypes.w' has shape 5x8, "
                        "model expects 7x8");
    }
    SUBCASE("model grew a stage the file never saw") {
      ModelConfig other = small_model();
      other.encoder.channels = {4, 8, 8};
      ModelState dst = vcsl::make_model_state(other, 4);
      CHECK_THROWS(vcsl::load_checkpoint(file.path, dst));
    }
    SUBCASE("file carries a stage the model lacks") {
      ModelConfig wide = small_model();
      wide.encoder.channels = {4, 8, 8};
      ModelState widesrc = vcsl::make_model_state(wide, 4);
      TempFile widefile("wide");
      vcsl::save_checkpoint(widefile.path, widesrc, 0);
      ModelState dst = vcsl::make_model_state(small_model(), 4);
      CHECK_THROWS_WITH(vcsl::load_checkpoint(widefile.path, dst),
                        "checkpoint: parameter 'encoder.conv2.w' is not part "
                        "of this model");
    }
  }

  TEST_CASE("a rejected load leaves the model untouched") {
    ModelState st = vcsl::make_model_state(small_model(), 61);
    std::vector<std::vector<double>> before;
    st.for_each([&](const vcsl::Param& p) { before.push_back(p.v); });

    ModelConfig other = small_model();
    other.prototypes = 9;
    ModelState foreign = vcsl::make_model_state(other, 61);
    TempFile file("atomic");
    vcsl::save_checkpoint(file.path, foreign, 0);

    CHECK_THROWS(vcsl::load_checkpoint(file.path, st));
    size_t k = 0;
    st.for_each([&](const vcsl::Param& p) {
      CHECK(bits_equal(p.v, before[k++]));
    });
    CHECK(st.stage_cursor == 0);
  }
}
