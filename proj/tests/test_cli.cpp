#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "vcsl/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out, err;
};

CliResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = vcsl::run_command(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Fresh scratch directory per test, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("vcsl_cli_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

// A config small enough that a three-stage run takes well under a second.
std::string write_tiny_config(const TempDir& dir, uint64_t corpus_seed = 5,
                              bool strict = false) {
  const nlohmann::json doc = {
      {"corpus",
       {{"datasets", 1},
        {"volumes_each", 24},
        {"depth", 4},
        {"extent", 8},
        {"classes", 2},
        {"seed", corpus_seed}}},
      {"encoder",
       {{"input_extent", 8},
        {"channels", {4, 8}},
        {"taps", 2},
        {"feature_dim", 8},
        {"embed_dim", 8}}},
      {"attention",
       {{"blocks", 2},
        {"heads", 2},
        {"head_dim", 4},
        {"feature_dim", 8},
        {"embed_dim", 8},
        {"max_seq", 8}}},
      {"losses", {{"prototypes", 5}}},
      {"mask", {{"max_slices", 8}}},
      {"train",
       {{"strict", strict},
        {"stage1", {{"epochs", 2}, {"batch", 2}, {"batches_per_epoch", 1}}},
        {"stage2", {{"epochs", 2}, {"batch", 2}, {"batches_per_epoch", 1}}},
        {"stage3", {{"epochs", 2}, {"batch", 2}, {"batches_per_epoch", 1}}}}},
  };
  const std::string path = (dir.path / "config.json").string();
  std::ofstream f(path);
  f << doc.dump(2);
  return path;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(bool(in), "missing ", path.string());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    const CliResult help = run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("Subcommands") != std::string::npos);

    const CliResult unknown = run({"grad-check", "--frobnicate"});
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("error:") != std::string::npos);
    CHECK(unknown.err.find("Usage") != std::string::npos);

    const CliResult missing = run({});
    CHECK(missing.code == 2);

    const CliResult badstage = run({"pretrain", "--stage", "4", "--out", "x"});
    CHECK(badstage.code == 2);
  }

  TEST_CASE("info prints version, schema and the unexercised preset") {
    const CliResult r = run({"info"});
    CHECK(r.code == 0);
    CHECK(r.out.find("vcsl 1.0.0") != std::string::npos);
    CHECK(r.out.find("\"corpus\"") != std::string::npos);
    CHECK(r.out.find("NOT exercised by tests") != std::string::npos);
  }

  TEST_CASE("schema violations exit 3 and carry the pointer") {
    TempDir dir("schema");
    const std::string path = (dir.path / "bad.json").string();
    std::ofstream(path) << R"({"corpus": {"bogus": 1}})";
    const CliResult r =
        run({"gen-corpus", "--config", path, "--out", dir.str()});
    CHECK(r.code == 3);
    CHECK(r.err.find("/corpus/bogus") != std::string::npos);
    CHECK(r.err.rfind("error:", 0) == 0);
    // Single line: exactly one newline, at the end.
    CHECK(count_lines(r.err) == 1);
  }

  TEST_CASE("malformed json exits 3") {
    TempDir dir("mangled");
    const std::string path = (dir.path / "bad.json").string();
    std::ofstream(path) << "{oops";
    const CliResult r =
        run({"gen-corpus", "--config", path, "--out", dir.str()});
    CHECK(r.code == 3);
    CHECK(count_lines(r.err) == 1);
  }

  TEST_CASE("pretrain stage 2 without a stage-1 checkpoint exits 3") {
    TempDir dir("prereq");
    const std::string cfg = write_tiny_config(dir);
    const CliResult r =
        run({"pretrain", "--stage", "2", "--config", cfg, "--out",
             (dir.path / "run").string()});
    CHECK(r.code == 3);
    CHECK(r.err.find("run pretrain --stage 1 first") != std::string::npos);
    CHECK(count_lines(r.err) == 1);
  }

  TEST_CASE("full tiny pipeline: gen-corpus, three stages, probe, export") {
    TempDir dir("pipeline");
    const std::string cfg = write_tiny_config(dir);
    const std::string out = (dir.path / "run").string();

    const CliResult gen = run({"gen-corpus", "--config", cfg, "--out", out});
    INFO(gen.err);
    CHECK(gen.code == 0);
    CHECK(gen.out.rfind("config {", 0) == 0);  // resolved config logged first
    CHECK(gen.out.find("seeds train=0 corpus=5") != std::string::npos);
    const auto summary =
        nlohmann::json::parse(read_file(dir.path / "run" / "corpus.json"));
    CHECK(summary.at("volumes").get<int>() == 24);
    CHECK(summary.at("value_min").get<double>() >= 0.0);
    CHECK(summary.at("value_max").get<double>() <= 1.0);

    for (int stage = 1; stage <= 3; ++stage) {
      const CliResult r = run({"pretrain", "--stage", std::to_string(stage),
                               "--config", cfg, "--out", out});
      INFO("stage ", stage, ": ", r.err);
      REQUIRE(r.code == 0);
      const std::string metrics = read_file(
          dir.path / "run" / ("metrics-stage" + std::to_string(stage) +
                              ".jsonl"));
      CHECK(count_lines(metrics) == 2);  // one line per epoch
      // Every line parses and names its stage.
      std::istringstream lines(metrics);
      std::string line;
      while (std::getline(lines, line)) {
        const auto m = nlohmann::json::parse(line);
        CHECK(m.at("stage").get<int>() == stage);
      }
    }
    CHECK(fs::exists(dir.path / "run" / "checkpoint.bin"));

    const CliResult probe = run({"probe", "--config", cfg, "--out", out});
    INFO(probe.err);
    REQUIRE(probe.code == 0);
    for (const char* tag : {"volume", "slice"}) {
      const auto rep = nlohmann::json::parse(
          read_file(dir.path / "run" / (std::string("probe-") + tag +
                                        ".json")));
      CHECK(rep.at("source").get<std::string>() == tag);
      CHECK(rep.at("accuracy").get<double>() >= 0.0);
      CHECK(rep.at("accuracy").get<double>() <= 1.0);
      CHECK(rep.at("chance").get<double>() == 0.5);
    }

    const CliResult exp = run({"export-metrics", "--out", out});
    CHECK(exp.code == 0);
    CHECK(count_lines(exp.out) == 6);  // 3 stages x 2 epochs
  }

  TEST_CASE("probe before any pretrain exits 3") {
    TempDir dir("noprobe");
    const std::string cfg = write_tiny_config(dir);
    const CliResult r = run({"probe", "--config", cfg, "--out",
                             (dir.path / "none").string()});
    CHECK(r.code == 3);
    CHECK(r.err.find("run pretrain first") != std::string::npos);
  }

  TEST_CASE("a stale lock blocks the run") {
    TempDir dir("locked");
    const std::string cfg = write_tiny_config(dir);
    const std::string out = (dir.path / "run").string();
    fs::create_directories(out);
    std::ofstream(fs::path(out) / ".lock") << "someone\n";
    const CliResult r =
        run({"pretrain", "--stage", "1", "--config", cfg, "--out", out});
    CHECK(r.code == 3);
    CHECK(r.err.find("locked by another run") != std::string::npos);
  }

  TEST_CASE("checkpoints refuse to continue onto a different corpus") {
    TempDir dir("seedswap");
    const std::string out = (dir.path / "run").string();
    const std::string cfg_a = write_tiny_config(dir, 5);
    const CliResult first =
        run({"pretrain", "--stage", "1", "--config", cfg_a, "--out", out});
    REQUIRE(first.code == 0);

    TempDir other("seedswap_b");
    const std::string cfg_b = write_tiny_config(other, 6);
    const CliResult second =
        run({"pretrain", "--stage", "2", "--config", cfg_b, "--out", out});
    CHECK(second.code == 3);
    CHECK(second.err.find("corpus seed") != std::string::npos);
  }

  TEST_CASE("VCSL_SEED overrides only the training seed") {
    TempDir dir("envseed");
    const std::string cfg = write_tiny_config(dir, 9);
    setenv("VCSL_SEED", "4242", 1);
    const CliResult r = run({"gen-corpus", "--config", cfg, "--out",
                             (dir.path / "run").string()});
    unsetenv("VCSL_SEED");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("seeds train=4242 corpus=9") != std::string::npos);

    setenv("VCSL_SEED", "12x", 1);
    const CliResult bad = run({"gen-corpus", "--config", cfg, "--out",
                               (dir.path / "run2").string()});
    unsetenv("VCSL_SEED");
    CHECK(bad.code == 3);
    CHECK(bad.err.find("VCSL_SEED") != std::string::npos);
  }

  TEST_CASE("strict reruns produce byte-identical metrics files") {
    TempDir dir("strict");
    const std::string cfg = write_tiny_config(dir, 5, /*strict=*/true);
    const std::string out_a = (dir.path / "a").string();
    const std::string out_b = (dir.path / "b").string();
    for (const std::string& out : {out_a, out_b})
      for (int stage = 1; stage <= 3; ++stage)
        REQUIRE(run({"pretrain", "--stage", std::to_string(stage), "--config",
                     cfg, "--out", out})
                    .code == 0);
    for (int stage = 1; stage <= 3; ++stage) {
      const std::string name = "metrics-stage" + std::to_string(stage) +
                               ".jsonl";
      CHECK(read_file(dir.path / "a" / name) ==
            read_file(dir.path / "b" / name));
    }
    CHECK(read_file(dir.path / "a" / "checkpoint.bin") ==
          read_file(dir.path / "b" / "checkpoint.bin"));
  }

  TEST_CASE("export-metrics with nothing recorded exits 3") {
    TempDir dir("nometrics");
    const CliResult r = run({"export-metrics", "--out", dir.str()});
    CHECK(r.code == 3);
    CHECK(r.err.find("no metrics") != std::string::npos);
  }
}
