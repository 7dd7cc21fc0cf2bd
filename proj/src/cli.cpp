#include "vcsl/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vcsl/checkpoint.hpp"
#include "vcsl/cli.hpp"
#include "vcsl/config.hpp"
#include "vcsl/gradcheck.hpp"
#include "vcsl/probe.hpp"

namespace vcsl {

namespace fs = std::filesystem;

namespace {

// Error that already knows its exit code (3 = precondition/schema).
struct CliError : std::runtime_error {
  int code;
  CliError(int code_, const std::string& what)
      : std::runtime_error(what), code(code_) {}
};

std::string single_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ';');
  return s;
}

// Exclusive .lock file under `dir`; refuses to start while another run owns
// the directory, releases on scope exit (including exceptions).
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw CliError(3, "output directory '" + dir.string() +
                            "' is locked by another run (found " +
                            path_.string() + ")");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] ssize_t n = ::write(fd_, pid.data(), pid.size());
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

RunConfig load_config(const std::string& path) {
  nlohmann::json doc = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw CliError(3, "cannot open config '" + path + "'");
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw CliError(3, "config '" + path + "': " + single_line(e.what()));
    }
  }
  RunConfig cfg = parse_run_config(doc);
  if (const char* env = std::getenv("VCSL_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (env[0] == '\0' || (end && *end != '\0'))
      throw CliError(3, std::string("VCSL_SEED must be a non-negative "
                                    "integer, got '") +
                            env + "'");
    cfg.train_seed = v;
  }
  return cfg;
}

// Every command announces the resolved config and seeds before any work.
void log_resolved(const RunConfig& cfg, std::ostream& out) {
  out << "config " << run_config_json(cfg).dump() << "\n";
  out << "seeds train=" << cfg.train_seed << " corpus=" << cfg.corpus.seed
      << " probe=" << cfg.probe_seed << "\n";
}

fs::path checkpoint_path(const std::string& out_dir) {
  return fs::path(out_dir) / "checkpoint.bin";
}

int cmd_gen_corpus(const std::string& config_path, const std::string& out_dir,
                   std::ostream& out) {
  const RunConfig cfg = load_config(config_path);
  log_resolved(cfg, out);
  DirLock lock(out_dir);

  const Corpus corpus = generate_corpus(cfg.corpus);
  double lo = 1.0, hi = 0.0;
  std::vector<int> histogram(static_cast<size_t>(cfg.corpus.classes), 0);
  std::vector<int> per_dataset(static_cast<size_t>(cfg.corpus.datasets), 0);
  for (const TaggedVolume& item : corpus.items) {
    ++histogram[static_cast<size_t>(item.label)];
    ++per_dataset[static_cast<size_t>(item.dataset)];
    for (double v : item.volume.v) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  nlohmann::json j = {{"volumes", corpus.size()},
                      {"datasets", per_dataset},
                      {"labels", histogram},
                      {"depth", cfg.corpus.depth},
                      {"extent", cfg.corpus.extent},
                      {"value_min", lo},
                      {"value_max", hi},
                      {"seed", cfg.corpus.seed}};
  const fs::path summary = fs::path(out_dir) / "corpus.json";
  std::ofstream f(summary);
  if (!f) throw CliError(1, "cannot write '" + summary.string() + "'");
  f << j.dump(2) << "\n";
  out << "corpus " << corpus.size() << " volumes -> " << summary.string()
      << "\n";
  return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& out_dir,
                 int stage, std::ostream& out) {
  const RunConfig cfg = load_config(config_path);
  log_resolved(cfg, out);
  DirLock lock(out_dir);

  ModelState state = make_model_state(cfg.model, cfg.train_seed);
  const fs::path ckpt = checkpoint_path(out_dir);
  if (stage > 1) {
    if (!fs::exists(ckpt))
      throw CliError(3, "stage " + std::to_string(stage) +
                            " requires a stage " + std::to_string(stage - 1) +
                            " checkpoint at '" + ckpt.string() +
                            "'; run pretrain --stage " +
                            std::to_string(stage - 1) + " first");
    const CheckpointMeta meta = load_checkpoint(ckpt.string(), state);
    if (meta.stage < stage - 1)
      throw CliError(3, "checkpoint '" + ckpt.string() +
                            "' has only completed stage " +
                            std::to_string(meta.stage) + "; stage " +
                            std::to_string(stage) + " needs stage " +
                            std::to_string(stage - 1));
    if (meta.corpus_seed != cfg.corpus.seed)
      throw CliError(3, "checkpoint '" + ckpt.string() +
                            "' was trained on corpus seed " +
                            std::to_string(meta.corpus_seed) +
                            " but the config says " +
                            std::to_string(cfg.corpus.seed));
  }

  const Corpus corpus = generate_corpus(cfg.corpus);
  const std::vector<const Volume*> views = training_view(corpus);
  const StageResult result = run_stage(state, views, cfg.train_config(stage));

  const fs::path metrics =
      fs::path(out_dir) / ("metrics-stage" + std::to_string(stage) + ".jsonl");
  std::ofstream f(metrics, std::ios::trunc);
  if (!f) throw CliError(1, "cannot write '" + metrics.string() + "'");
  for (const EpochMetric& m : result.epochs) {
    const std::string line = metric_json_line(m);
    f << line << "\n";
    out << line << "\n";
  }
  save_checkpoint(ckpt.string(), state, cfg.corpus.seed);
  out << "stage " << stage << " done: " << result.epochs.size()
      << " epochs, final loss " << result.epochs.back().loss
      << ", checkpoint -> " << ckpt.string() << "\n";
  return 0;
}

int cmd_probe(const std::string& config_path, const std::string& out_dir,
              const std::string& source, std::ostream& out) {
  const RunConfig cfg = load_config(config_path);
  log_resolved(cfg, out);
  DirLock lock(out_dir);

  const fs::path ckpt = checkpoint_path(out_dir);
  if (!fs::exists(ckpt))
    throw CliError(3, "probe requires a checkpoint at '" + ckpt.string() +
                          "'; run pretrain first");
  ModelState state = make_model_state(cfg.model, cfg.train_seed);
  const CheckpointMeta meta = load_checkpoint(ckpt.string(), state);
  if (meta.corpus_seed != cfg.corpus.seed)
    throw CliError(3, "checkpoint '" + ckpt.string() +
                          "' was trained on corpus seed " +
                          std::to_string(meta.corpus_seed) +
                          " but the config says " +
                          std::to_string(cfg.corpus.seed));

  const Corpus corpus = generate_corpus(cfg.corpus);
  const std::vector<const Volume*> views = training_view(corpus);
  const std::vector<int> labels = corpus_labels(corpus);

  const auto report_one = [&](const std::string& tag) {
    ProbeReport report;
    if (tag == "volume") {
      report = linear_probe(embed_volumes(state, views), labels,
                            cfg.probe_seed, tag);
    } else {
      report = linear_probe(embed_slices(state, views),
                            slice_labels(labels, cfg.corpus.depth),
                            cfg.probe_seed, tag);
    }
    const fs::path path = fs::path(out_dir) / ("probe-" + tag + ".json");
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw CliError(1, "cannot write '" + path.string() + "'");
    f << probe_report_json(report) << "\n";
    out << "probe " << tag << " accuracy=" << report.accuracy
        << " chance=" << report.chance << " -> " << path.string() << "\n";
  };

  if (source == "volume" || source == "both") report_one("volume");
  if (source == "slice" || source == "both") report_one("slice");
  return 0;
}

int cmd_grad_check(bool as_json, std::ostream& out) {
  constexpr double kTolerance = 1e-4;
  const GradCheckReport report = grad_check_all({});
  if (as_json) {
    out << grad_check_json(report) << "\n";
  } else {
    for (const GradCheckEntry& e : report.entries)
      out << e.objective << " " << e.group << " max_rel_err=" << e.max_rel_err
          << "\n";
    out << "codes detached: " << (report.codes_detached ? "yes" : "no")
        << "\n";
    out << "worst " << report.worst << " tolerance " << kTolerance << "\n";
  }
  if (!report.passed(kTolerance)) {
    out << "grad-check FAIL\n";
    return 1;
  }
  out << "grad-check PASS\n";
  return 0;
}

int cmd_export_metrics(const std::string& out_dir, std::ostream& out) {
  bool any = false;
  for (int stage = 1; stage <= 3; ++stage) {
    const fs::path path =
        fs::path(out_dir) /
        ("metrics-stage" + std::to_string(stage) + ".jsonl");
    if (!fs::exists(path)) continue;
    std::ifstream f(path);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      try {
        [[maybe_unused]] auto parsed = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw CliError(1, "corrupt metric line in '" + path.string() +
                              "': " + single_line(e.what()));
      }
      out << line << "\n";
      any = true;
    }
  }
  if (!any)
    throw CliError(3, "no metrics found under '" + out_dir +
                          "'; run pretrain first");
  return 0;
}

int cmd_info(std::ostream& out) {
  out << "vcsl " << kCliVersion << "\n\n";
  out << "default config (every key overridable):\n";
  out << run_config_json(default_run_config()).dump(2) << "\n\n";
  out << "full-scale preset (configs/full_scale.json; appendix-sized, NOT "
         "exercised by tests):\n";
  out << "  prototypes 3000, attention blocks 4, heads 6, offset groups 6,\n";
  out << "  slice features 640 wide, embeddings 64 wide, batches 1024 "
         "(slices) / 12 (volumes),\n";
  out << "  100 epochs per stage\n";
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err) {
  CLI::App app{"joint 2D/3D self-supervised representation learning"};
  app.require_subcommand(1);

  std::string config_path, out_dir, source = "both";
  int stage = 1;
  bool as_json = false;

  CLI::App* gen = app.add_subcommand(
      "gen-corpus", "materialize the synthetic corpus and summarize it");
  gen->add_option("--config", config_path, "JSON config file");
  gen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* pre =
      app.add_subcommand("pretrain", "run one training stage end to end");
  pre->add_option("--stage", stage, "training stage (1, 2 or 3)")
      ->required()
      ->check(CLI::Range(1, 3));
  pre->add_option("--config", config_path, "JSON config file");
  pre->add_option("--out", out_dir, "output directory")->required();

  CLI::App* prb = app.add_subcommand(
      "probe", "train linear probes on frozen checkpoint embeddings");
  prb->add_option("--config", config_path, "JSON config file");
  prb->add_option("--out", out_dir, "output directory")->required();
  prb->add_option("--source", source, "volume, slice or both")
      ->check(CLI::IsMember({"volume", "slice", "both"}));

  CLI::App* gc = app.add_subcommand(
      "grad-check", "compare analytic gradients against central differences");
  gc->add_flag("--json", as_json, "emit one JSON report line");

  CLI::App* exp = app.add_subcommand(
      "export-metrics", "dump recorded metric lines to stdout");
  exp->add_option("--out", out_dir, "directory holding metrics files")
      ->required();

  app.add_subcommand("info", "print version, config schema and presets");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << single_line(e.what()) << "\n";
    err << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(config_path, out_dir, out);
    if (pre->parsed()) return cmd_pretrain(config_path, out_dir, stage, out);
    if (prb->parsed()) return cmd_probe(config_path, out_dir, source, out);
    if (gc->parsed()) return cmd_grad_check(as_json, out);
    if (exp->parsed()) return cmd_export_metrics(out_dir, out);
    return cmd_info(out);
  } catch (const ConfigError& e) {
    err << "error: " << single_line(e.what()) << "\n";
    return 3;
  } catch (const CliError& e) {
    err << "error: " << single_line(e.what()) << "\n";
    return e.code;
  } catch (const std::exception& e) {
    err << "error: " << single_line(e.what()) << "\n";
    return 1;
  }
}

}  // namespace vcsl
