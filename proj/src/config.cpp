#include "vcsl/config.hpp"

#include <set>
#include <string>
#include <vector>

namespace vcsl {

namespace {

using nlohmann::json;

// Tracks which keys of one JSON object were consumed; anything left over at
// finish() is unknown and rejected with its full pointer path.  Owns a copy
// of the object so readers can be fed nested temporaries.
class SectionReader {
 public:
  SectionReader(json j, std::string ptr)
      : obj_(std::move(j)), ptr_(std::move(ptr)) {
    if (!obj_.is_object())
      throw ConfigError(ptr_.empty() ? "/" : ptr_, "expected an object");
  }

  int get_int(const char* key, int fallback) {
    const json* v = mark(key);
    if (!v) return fallback;
    if (!v->is_number_integer())
      throw ConfigError(ptr_ + "/" + key, "expected an integer");
    return v->get<int>();
  }

  uint64_t get_u64(const char* key, uint64_t fallback) {
    const json* v = mark(key);
    if (!v) return fallback;
    if (!(v->is_number_unsigned() ||
          (v->is_number_integer() && v->get<int64_t>() >= 0)))
      throw ConfigError(ptr_ + "/" + key, "expected a non-negative integer");
    return v->get<uint64_t>();
  }

  double get_double(const char* key, double fallback) {
    const json* v = mark(key);
    if (!v) return fallback;
    if (!v->is_number())
      throw ConfigError(ptr_ + "/" + key, "expected a number");
    return v->get<double>();
  }

  bool get_bool(const char* key, bool fallback) {
    const json* v = mark(key);
    if (!v) return fallback;
    if (!v->is_boolean())
      throw ConfigError(ptr_ + "/" + key, "expected a boolean");
    return v->get<bool>();
  }

  std::string get_string(const char* key, const std::string& fallback) {
    const json* v = mark(key);
    if (!v) return fallback;
    if (!v->is_string())
      throw ConfigError(ptr_ + "/" + key, "expected a string");
    return v->get<std::string>();
  }

  std::vector<int> get_int_array(const char* key,
                                 const std::vector<int>& fallback) {
    const json* v = mark(key);
    if (!v) return fallback;
    if (!v->is_array())
      throw ConfigError(ptr_ + "/" + key, "expected an array of integers");
    std::vector<int> out;
    for (const auto& e : *v) {
      if (!e.is_number_integer())
        throw ConfigError(ptr_ + "/" + key, "expected an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  // Child object for a nested section; absent keys read as {}.
  json get_section(const char* key) {
    const json* v = mark(key);
    return v ? *v : json::object();
  }

  std::string child_ptr(const char* key) const { return ptr_ + "/" + key; }

  void finish() const {
    for (const auto& item : obj_.items())
      if (!seen_.count(item.key()))
        throw ConfigError(ptr_ + "/" + item.key(), "unknown key");
  }

 private:
  const json* mark(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  json obj_;
  std::string ptr_;
  std::set<std::string> seen_;
};

StagePlan parse_stage(const json& j, const std::string& ptr,
                      const StagePlan& dflt) {
  SectionReader r(j, ptr);
  StagePlan plan;
  plan.epochs = r.get_int("epochs", dflt.epochs);
  plan.batch = r.get_int("batch", dflt.batch);
  plan.batches_per_epoch = r.get_int("batches_per_epoch",
                                     dflt.batches_per_epoch);
  r.finish();
  return plan;
}

void require(bool ok, const std::string& ptr, const std::string& what) {
  if (!ok) throw ConfigError(ptr, what);
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  // Stage 1 trains on slices; stages 2-3 pay per-volume costs.  Stage 2
  // averages enough volumes per epoch that its epoch means fall smoothly
  // instead of bouncing with the mask draws; stage 3 feeds the assignment
  // solver 32 stacked views per batch so the codes are worth chasing.
  cfg.stage[0] = {50, 16, 6};
  cfg.stage[1] = {50, 8, 12};
  cfg.stage[2] = {50, 16, 4};
  // The default corpus separates its latent classes mostly by mean
  // intensity, so the training gain jitter stays narrow: a wide gain range
  // would ask the encoders to become invariant to the one cue the probes
  // need.  The transform family itself keeps its general-purpose defaults.
  cfg.model.augment.intensity_lo = 0.97;
  cfg.model.augment.intensity_hi = 1.03;
  return cfg;
}

TrainConfig RunConfig::train_config(int stage_no) const {
  if (stage_no < 1 || stage_no > 3)
    throw std::runtime_error("RunConfig: stage must be 1, 2 or 3, got " +
                             std::to_string(stage_no));
  const StagePlan& plan = stage[stage_no - 1];
  TrainConfig t;
  t.stage = stage_no;
  t.epochs = plan.epochs;
  t.batch = plan.batch;
  t.batches_per_epoch = plan.batches_per_epoch;
  t.lr = lr;
  t.temperature = temperature;
  t.sinkhorn = sinkhorn;
  t.mask_ratio = mask_ratio;
  t.squared_mask = squared_mask;
  t.joint_stage2 = joint_stage2;
  t.strict = strict;
  t.seed = train_seed;
  return t;
}

void RunConfig::validate() const {
  try {
    corpus.validate();
  } catch (const std::exception& e) {
    throw ConfigError("/corpus", e.what());
  }
  try {
    model.encoder.validate();
  } catch (const std::exception& e) {
    throw ConfigError("/encoder", e.what());
  }
  try {
    model.attention.validate();
  } catch (const std::exception& e) {
    throw ConfigError("/attention", e.what());
  }
  try {
    model.augment.validate();
  } catch (const std::exception& e) {
    throw ConfigError("/train/augment", e.what());
  }

  require(model.prototypes >= 2, "/losses/prototypes",
          "need at least two prototypes, got " +
              std::to_string(model.prototypes));
  require(temperature > 0.0, "/losses/temperature", "must be positive");
  require(sinkhorn.epsilon > 0.0, "/losses/sinkhorn/epsilon",
          "must be positive");
  require(sinkhorn.max_iters >= 1, "/losses/sinkhorn/max_iters",
          "need at least one iteration");
  require(sinkhorn.tol >= 0.0, "/losses/sinkhorn/tol",
          "must be non-negative");
  require(mask_ratio > 0.0 && mask_ratio <= 1.0, "/mask/ratio",
          "must be in (0, 1]");
  require(model.max_slices >= corpus.depth, "/mask/max_slices",
          "volumes have " + std::to_string(corpus.depth) +
              " slices but the decoder bias covers only " +
              std::to_string(model.max_slices));
  require(lr >= 0.0, "/train/lr", "must be non-negative");

  // Cross-section geometry: the corpus feeds the encoder feeds the stack.
  require(corpus.extent == model.encoder.input_extent, "/encoder/input_extent",
          "corpus slices are " + std::to_string(corpus.extent) + "x" +
              std::to_string(corpus.extent) + " but the encoder expects " +
              std::to_string(model.encoder.input_extent) + "x" +
              std::to_string(model.encoder.input_extent));
  require(model.encoder.feature_dim == model.attention.feature_dim,
          "/attention/feature_dim",
          "encoder emits rows of width " +
              std::to_string(model.encoder.feature_dim) +
              " but the aggregator reads width " +
              std::to_string(model.attention.feature_dim));
  require(model.encoder.embed_dim == model.attention.embed_dim,
          "/attention/embed_dim",
          "slice and volume embeddings share one prototype bank; widths " +
              std::to_string(model.encoder.embed_dim) + " and " +
              std::to_string(model.attention.embed_dim) + " differ");
  const int seq = corpus.depth * model.encoder.taps;
  require(seq <= model.attention.max_seq, "/attention/max_seq",
          "volumes encode to " + std::to_string(seq) +
              " feature rows but max_seq is " +
              std::to_string(model.attention.max_seq));
  require(seq % model.attention.pyramid_factor() == 0, "/attention/blocks",
          "volumes encode to " + std::to_string(seq) +
              " feature rows, which " + std::to_string(model.attention.blocks) +
              " pooling blocks cannot halve evenly");

  for (int s = 0; s < 3; ++s) {
    const std::string ptr = "/train/stage" + std::to_string(s + 1);
    require(stage[s].epochs >= 1, ptr + "/epochs",
            "need at least one epoch");
    require(stage[s].batch >= (s == 1 ? 1 : 2), ptr + "/batch",
            s == 1 ? "need at least one volume"
                   : "swapped losses need a batch of at least two");
    require(stage[s].batches_per_epoch >= 1, ptr + "/batches_per_epoch",
            "need at least one batch per epoch");
  }
}

RunConfig parse_run_config(const nlohmann::json& doc) {
  RunConfig cfg = default_run_config();
  SectionReader root(doc, "");
  cfg.notes = root.get_string("notes", cfg.notes);

  {
    SectionReader r(root.get_section("corpus"), "/corpus");
    cfg.corpus.datasets = r.get_int("datasets", cfg.corpus.datasets);
    cfg.corpus.volumes = r.get_int_array("volumes", cfg.corpus.volumes);
    cfg.corpus.volumes_each = r.get_int("volumes_each",
                                        cfg.corpus.volumes_each);
    cfg.corpus.depth = r.get_int("depth", cfg.corpus.depth);
    cfg.corpus.extent = r.get_int("extent", cfg.corpus.extent);
    cfg.corpus.classes = r.get_int("classes", cfg.corpus.classes);
    cfg.corpus.pattern = r.get_string("pattern", cfg.corpus.pattern);
    cfg.corpus.noise = r.get_double("noise", cfg.corpus.noise);
    cfg.corpus.seed = r.get_u64("seed", cfg.corpus.seed);
    r.finish();
  }
  {
    SectionReader r(root.get_section("encoder"), "/encoder");
    EncoderConfig& e = cfg.model.encoder;
    e.input_extent = r.get_int("input_extent", e.input_extent);
    e.channels = r.get_int_array("channels", e.channels);
    e.taps = r.get_int("taps", e.taps);
    e.feature_dim = r.get_int("feature_dim", e.feature_dim);
    e.embed_dim = r.get_int("embed_dim", e.embed_dim);
    r.finish();
  }
  {
    SectionReader r(root.get_section("attention"), "/attention");
    AttentionConfig& a = cfg.model.attention;
    a.blocks = r.get_int("blocks", a.blocks);
    a.heads = r.get_int("heads", a.heads);
    a.head_dim = r.get_int("head_dim", a.head_dim);
    a.offset_groups = r.get_int("offset_groups", a.offset_groups);
    a.feature_dim = r.get_int("feature_dim", a.feature_dim);
    a.embed_dim = r.get_int("embed_dim", a.embed_dim);
    a.downsample = r.get_int("downsample", a.downsample);
    a.max_seq = r.get_int("max_seq", a.max_seq);
    a.positional_encoding = r.get_bool("positional_encoding",
                                       a.positional_encoding);
    r.finish();
  }
  {
    SectionReader r(root.get_section("losses"), "/losses");
    cfg.temperature = r.get_double("temperature", cfg.temperature);
    cfg.model.prototypes = r.get_int("prototypes", cfg.model.prototypes);
    SectionReader s(r.get_section("sinkhorn"), "/losses/sinkhorn");
    cfg.sinkhorn.epsilon = s.get_double("epsilon", cfg.sinkhorn.epsilon);
    cfg.sinkhorn.max_iters = s.get_int("max_iters", cfg.sinkhorn.max_iters);
    cfg.sinkhorn.tol = s.get_double("tol", cfg.sinkhorn.tol);
    s.finish();
    r.finish();
  }
  {
    SectionReader r(root.get_section("mask"), "/mask");
    cfg.mask_ratio = r.get_double("ratio", cfg.mask_ratio);
    cfg.squared_mask = r.get_bool("squared", cfg.squared_mask);
    cfg.model.max_slices = r.get_int("max_slices", cfg.model.max_slices);
    r.finish();
  }
  {
    SectionReader r(root.get_section("train"), "/train");
    cfg.train_seed = r.get_u64("seed", cfg.train_seed);
    cfg.lr = r.get_double("lr", cfg.lr);
    cfg.strict = r.get_bool("strict", cfg.strict);
    cfg.joint_stage2 = r.get_bool("joint_stage2", cfg.joint_stage2);
    {
      SectionReader a(r.get_section("augment"), "/train/augment");
      TransformSpec& t = cfg.model.augment;
      t.crop_min_area = a.get_double("crop_min_area", t.crop_min_area);
      t.allow_flip = a.get_bool("allow_flip", t.allow_flip);
      t.noise_sigma = a.get_double("noise_sigma", t.noise_sigma);
      t.intensity_lo = a.get_double("intensity_lo", t.intensity_lo);
      t.intensity_hi = a.get_double("intensity_hi", t.intensity_hi);
      t.per_slice_independent = a.get_bool("per_slice_independent",
                                           t.per_slice_independent);
      a.finish();
    }
    cfg.stage[0] = parse_stage(r.get_section("stage1"), "/train/stage1",
                               cfg.stage[0]);
    cfg.stage[1] = parse_stage(r.get_section("stage2"), "/train/stage2",
                               cfg.stage[1]);
    cfg.stage[2] = parse_stage(r.get_section("stage3"), "/train/stage3",
                               cfg.stage[2]);
    r.finish();
  }
  {
    SectionReader r(root.get_section("probe"), "/probe");
    cfg.probe_seed = r.get_u64("seed", cfg.probe_seed);
    r.finish();
  }
  root.finish();

  cfg.validate();
  return cfg;
}

nlohmann::json run_config_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["corpus"] = {{"datasets", cfg.corpus.datasets},
                 {"volumes", cfg.corpus.volumes},
                 {"volumes_each", cfg.corpus.volumes_each},
                 {"depth", cfg.corpus.depth},
                 {"extent", cfg.corpus.extent},
                 {"classes", cfg.corpus.classes},
                 {"pattern", cfg.corpus.pattern},
                 {"noise", cfg.corpus.noise},
                 {"seed", cfg.corpus.seed}};
  j["encoder"] = {{"input_extent", cfg.model.encoder.input_extent},
                  {"channels", cfg.model.encoder.channels},
                  {"taps", cfg.model.encoder.taps},
                  {"feature_dim", cfg.model.encoder.feature_dim},
                  {"embed_dim", cfg.model.encoder.embed_dim}};
  j["attention"] = {
      {"blocks", cfg.model.attention.blocks},
      {"heads", cfg.model.attention.heads},
      {"head_dim", cfg.model.attention.head_dim},
      {"offset_groups", cfg.model.attention.offset_groups},
      {"feature_dim", cfg.model.attention.feature_dim},
      {"embed_dim", cfg.model.attention.embed_dim},
      {"downsample", cfg.model.attention.downsample},
      {"max_seq", cfg.model.attention.max_seq},
      {"positional_encoding", cfg.model.attention.positional_encoding}};
  j["losses"] = {{"temperature", cfg.temperature},
                 {"prototypes", cfg.model.prototypes},
                 {"sinkhorn",
                  {{"epsilon", cfg.sinkhorn.epsilon},
                   {"max_iters", cfg.sinkhorn.max_iters},
                   {"tol", cfg.sinkhorn.tol}}}};
  j["mask"] = {{"ratio", cfg.mask_ratio},
               {"squared", cfg.squared_mask},
               {"max_slices", cfg.model.max_slices}};
  nlohmann::json stages[3];
  for (int s = 0; s < 3; ++s)
    stages[s] = {{"epochs", cfg.stage[s].epochs},
                 {"batch", cfg.stage[s].batch},
                 {"batches_per_epoch", cfg.stage[s].batches_per_epoch}};
  j["train"] = {{"seed", cfg.train_seed},
                {"lr", cfg.lr},
                {"strict", cfg.strict},
                {"joint_stage2", cfg.joint_stage2},
                {"augment",
                 {{"crop_min_area", cfg.model.augment.crop_min_area},
                  {"allow_flip", cfg.model.augment.allow_flip},
                  {"noise_sigma", cfg.model.augment.noise_sigma},
                  {"intensity_lo", cfg.model.augment.intensity_lo},
                  {"intensity_hi", cfg.model.augment.intensity_hi},
                  {"per_slice_independent",
                   cfg.model.augment.per_slice_independent}}},
                {"stage1", stages[0]},
                {"stage2", stages[1]},
                {"stage3", stages[2]}};
  j["probe"] = {{"seed", cfg.probe_seed}};
  j["notes"] = cfg.notes;
  return j;
}

}  // namespace vcsl
