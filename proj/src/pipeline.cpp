#include "vcsl/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "vcsl/kernels.hpp"

namespace vcsl {

void ModelConfig::validate() const {
  encoder.validate();
  attention.validate();
  augment.validate();
  if (prototypes < 1)
    throw std::runtime_error("ModelConfig: prototypes must be positive, got " +
                             std::to_string(prototypes));
  if (max_slices < 1)
    throw std::runtime_error("ModelConfig: max_slices must be positive, got " +
                             std::to_string(max_slices));
  if (encoder.feature_dim != attention.feature_dim)
    throw std::runtime_error(
        "ModelConfig: aggregator reads rows of width " +
        std::to_string(attention.feature_dim) + " but the encoder emits " +
        std::to_string(encoder.feature_dim));
  if (encoder.embed_dim != attention.embed_dim)
    throw std::runtime_error(
        "ModelConfig: slice and volume embeddings share one prototype bank, "
        "so their widths must match, got " +
        std::to_string(encoder.embed_dim) + " and " +
        std::to_string(attention.embed_dim));
}

void ModelState::for_each(const std::function<void(Param&)>& fn) {
  encoder.for_each(fn);
  attention.for_each(fn);
  mask_head.for_each(fn);
  fn(prototypes);
}

void ModelState::for_each(
    const std::function<void(const Param&)>& fn) const {
  // The groups only expose mutable traversal; const access reuses it.
  auto& self = const_cast<ModelState&>(*this);
  self.for_each([&](Param& p) { fn(p); });
}

ModelState make_model_state(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelState state;
  state.cfg = cfg;
  state.init_seed = seed;
  // Each group draws from its own child stream so adding parameters to one
  // group never reshuffles another.
  Rng enc_rng(derive_seed(seed, 1));
  state.encoder = make_encoder_params(cfg.encoder, enc_rng);
  Rng att_rng(derive_seed(seed, 2));
  state.attention = make_attention_params(cfg.attention, att_rng);
  Rng head_rng(derive_seed(seed, 3));
  state.mask_head = make_mask_head_params(
      cfg.encoder.feature_dim, cfg.encoder.taps, cfg.max_slices, head_rng);
  Rng proto_rng(derive_seed(seed, 4));
  state.prototypes =
      make_prototypes(cfg.prototypes, cfg.encoder.embed_dim, proto_rng);
  return state;
}

void TrainConfig::validate() const {
  if (stage < 1 || stage > 3)
    throw std::runtime_error("TrainConfig: stage must be 1, 2, or 3, got " +
                             std::to_string(stage));
  if (epochs < 1)
    throw std::runtime_error("TrainConfig: epochs must be positive, got " +
                             std::to_string(epochs));
  const int min_batch = stage == 2 ? 1 : 2;
  if (batch < min_batch)
    throw std::runtime_error(
        "TrainConfig: stage " + std::to_string(stage) + " needs a batch of " +
        "at least " + std::to_string(min_batch) + ", got " +
        std::to_string(batch));
  if (batches_per_epoch < 1)
    throw std::runtime_error(
        "TrainConfig: batches_per_epoch must be positive, got " +
        std::to_string(batches_per_epoch));
  // lr = 0 is legal: it turns training into a pure evaluation sweep.
  if (lr < 0.0)
    throw std::runtime_error("TrainConfig: lr must be non-negative, got " +
                             std::to_string(lr));
  if (!(temperature > 0.0))
    throw std::runtime_error("TrainConfig: temperature must be positive, got " +
                             std::to_string(temperature));
  if (stage == 2 && (!(mask_ratio > 0.0) || mask_ratio > 1.0))
    throw std::runtime_error("TrainConfig: mask_ratio must lie in (0, 1], got " +
                             std::to_string(mask_ratio));
}

void sgd_step(Param& p, std::span<const double> grad, double lr) {
  if (grad.size() != p.size())
    throw std::runtime_error("sgd_step: gradient of size " +
                             std::to_string(grad.size()) + " for parameter '" +
                             p.name + "' of size " + std::to_string(p.size()));
  if (lr < 0.0)
    throw std::runtime_error("sgd_step: lr must be non-negative, got " +
                             std::to_string(lr));
  for (size_t i = 0; i < grad.size(); ++i) p.v[i] -= lr * grad[i];
}

namespace {

struct BatchOutcome {
  double loss = 0.0;
  double norm_error = 0.0;
};

// Largest deviation of any embedding row from unit length.
double worst_norm_error(const std::vector<ad::Tensor>& zs) {
  double worst = 0.0;
  for (const ad::Tensor& z : zs) {
    const auto& v = z.values();
    double sq = 0.0;
    for (double x : v) sq += x * x;
    worst = std::max(worst, std::abs(std::sqrt(sq) - 1.0));
  }
  return worst;
}

void apply_updates(Binder& binder, double lr) {
  for (const auto& [param, tensor] : binder.entries())
    if (tensor.requires_grad()) sgd_step(*param, tensor.grad(), lr);
}

// Stage 1: swapped clustering over two augmented views of sampled slices.
BatchOutcome stage1_batch(ModelState& state,
                          std::span<const Volume* const> volumes,
                          const TrainConfig& cfg, uint64_t batch_seed) {
  Rng rng(batch_seed);
  ad::Graph g;
  Binder binder(g);
  BoundEncoder enc =
      bind_encoder(g, binder, state.encoder, state.cfg.encoder, true);
  ad::Tensor protos = binder.bind(state.prototypes, true);

  std::vector<ad::Tensor> za, zb;
  za.reserve(static_cast<size_t>(cfg.batch));
  zb.reserve(static_cast<size_t>(cfg.batch));
  for (int i = 0; i < cfg.batch; ++i) {
    const Volume& vol = *volumes[rng.below(volumes.size())];
    const Slice base =
        vol.slice_copy(static_cast<int>(rng.below(
            static_cast<uint64_t>(vol.depth))));
    const uint64_t seed_a = rng.next_u64();
    const uint64_t seed_b = rng.next_u64();
    za.push_back(encode_slice(
        g, enc, augment_slice(base, state.cfg.augment, seed_a)));
    zb.push_back(encode_slice(
        g, enc, augment_slice(base, state.cfg.augment, seed_b)));
  }
  ad::Tensor loss =
      batch_swapped_loss(g, za, zb, protos, {cfg.temperature, cfg.sinkhorn});

  BatchOutcome out;
  out.loss = loss.scalar();
  out.norm_error = std::max(worst_norm_error(za), worst_norm_error(zb));
  if (!std::isfinite(out.loss) || cfg.lr == 0.0) return out;
  g.backward(loss);
  apply_updates(binder, cfg.lr);
  renormalize_prototype_rows(state.prototypes);
  return out;
}

// Stage 2: masked prediction over one augmented view per sampled volume.
BatchOutcome stage2_batch(ModelState& state,
                          std::span<const Volume* const> volumes,
                          const TrainConfig& cfg, uint64_t batch_seed) {
  Rng rng(batch_seed);
  ad::Graph g;
  Binder binder(g);
  BoundEncoder enc = bind_encoder(g, binder, state.encoder, state.cfg.encoder,
                                  cfg.joint_stage2);
  BoundAttention stack =
      bind_attention(g, binder, state.attention, state.cfg.attention, true);
  BoundMaskHead head = bind_mask_head(g, binder, state.mask_head,
                                      state.cfg.encoder.taps, true);

  std::vector<ad::Tensor> items;
  items.reserve(static_cast<size_t>(cfg.batch));
  for (int i = 0; i < cfg.batch; ++i) {
    const Volume& vol = *volumes[rng.below(volumes.size())];
    const uint64_t view_seed = rng.next_u64();
    const uint64_t mask_seed = rng.next_u64();
    const Volume view = augment_volume(vol, state.cfg.augment, view_seed);
    ad::Tensor y = encode_volume_rows(g, enc, view);
    const MaskPlan plan = sample_mask(view.depth, cfg.mask_ratio, mask_seed);
    items.push_back(
        masked_prediction_loss(g, y, plan, head, stack, cfg.squared_mask));
  }
  ad::Tensor loss =
      items.size() == 1 ? items[0] : g.reduce_mean(g.concat_rows(items));

  BatchOutcome out;
  out.loss = loss.scalar();
  if (!std::isfinite(out.loss) || cfg.lr == 0.0) return out;
  g.backward(loss);
  apply_updates(binder, cfg.lr);
  return out;
}

// Stage 3: swapped clustering over holistic embeddings of two volume views.
BatchOutcome stage3_batch(ModelState& state,
                          std::span<const Volume* const> volumes,
                          const TrainConfig& cfg, uint64_t batch_seed) {
  Rng rng(batch_seed);
  ad::Graph g;
  Binder binder(g);
  BoundEncoder enc =
      bind_encoder(g, binder, state.encoder, state.cfg.encoder, true);
  BoundAttention stack =
      bind_attention(g, binder, state.attention, state.cfg.attention, true);
  ad::Tensor protos = binder.bind(state.prototypes, true);

  std::vector<ad::Tensor> za, zb;
  za.reserve(static_cast<size_t>(cfg.batch));
  zb.reserve(static_cast<size_t>(cfg.batch));
  for (int i = 0; i < cfg.batch; ++i) {
    const Volume& vol = *volumes[rng.below(volumes.size())];
    const uint64_t seed_a = rng.next_u64();
    const uint64_t seed_b = rng.next_u64();
    const Volume view_a = augment_volume(vol, state.cfg.augment, seed_a);
    const Volume view_b = augment_volume(vol, state.cfg.augment, seed_b);
    za.push_back(
        volume_embed(g, stack, encode_volume_rows(g, enc, view_a)).embedding);
    zb.push_back(
        volume_embed(g, stack, encode_volume_rows(g, enc, view_b)).embedding);
  }
  ad::Tensor loss =
      batch_swapped_loss(g, za, zb, protos, {cfg.temperature, cfg.sinkhorn});

  BatchOutcome out;
  out.loss = loss.scalar();
  out.norm_error = std::max(worst_norm_error(za), worst_norm_error(zb));
  if (!std::isfinite(out.loss) || cfg.lr == 0.0) return out;
  g.backward(loss);
  apply_updates(binder, cfg.lr);
  renormalize_prototype_rows(state.prototypes);
  return out;
}

// Restores the kernel backend when a stage exits, normally or by throw.
struct BackendGuard {
  kern::Backend previous = kern::active_backend();
  ~BackendGuard() { kern::set_backend(previous); }
};

}  // namespace

StageResult run_stage(ModelState& state,
                      std::span<const Volume* const> volumes,
                      const TrainConfig& cfg) {
  cfg.validate();
  state.cfg.validate();
  if (volumes.empty())
    throw std::runtime_error("run_stage: the corpus is empty");
  if (!cfg.cold_start) {
    if (cfg.stage == 2 && state.stage_cursor < 1)
      throw std::runtime_error(
          "run_stage: stage 2 needs a finished stage-1 state "
          "(pass cold_start to override)");
    if (cfg.stage == 3 && state.stage_cursor < 2)
      throw std::runtime_error(
          "run_stage: stage 3 needs finished stage-1 and stage-2 state "
          "(pass cold_start to override)");
  }

  BackendGuard guard;
  if (cfg.strict) kern::set_backend(kern::Backend::kScalar);

  StageResult result;
  result.epochs.reserve(static_cast<size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    for (int batch = 0; batch < cfg.batches_per_epoch; ++batch) {
      const uint64_t batch_seed =
          derive_seed(cfg.seed, static_cast<uint64_t>(cfg.stage),
                      static_cast<uint64_t>(epoch),
                      static_cast<uint64_t>(batch));
      const std::string at = "stage " + std::to_string(cfg.stage) +
                             " epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(batch);
      BatchOutcome out;
      try {
        switch (cfg.stage) {
          case 1: out = stage1_batch(state, volumes, cfg, batch_seed); break;
          case 2: out = stage2_batch(state, volumes, cfg, batch_seed); break;
          default: out = stage3_batch(state, volumes, cfg, batch_seed); break;
        }
      } catch (const std::exception& e) {
        // Overflow inside a batch surfaces as an op-level error; pin the
        // coordinates so the failing batch is reproducible.
        throw std::runtime_error("run_stage: " + at + ": " + e.what());
      }
      if (!std::isfinite(out.loss))
        throw std::runtime_error("run_stage: non-finite loss at " + at);
      loss_sum += out.loss;
      result.max_norm_error = std::max(result.max_norm_error, out.norm_error);
    }
    const double wall_ms =
        cfg.strict ? 0.0
                   : std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    result.epochs.push_back({cfg.stage, epoch,
                             loss_sum / cfg.batches_per_epoch, wall_ms,
                             cfg.seed});
    if (cfg.stage > state.stage_cursor) {
      state.stage_cursor = cfg.stage;
      state.epoch_cursor = 0;
    }
    if (cfg.stage == state.stage_cursor) state.epoch_cursor = epoch + 1;
  }
  return result;
}

std::string metric_json_line(const EpochMetric& m) {
  char buf[192];
  std::snprintf(buf, sizeof buf,
                "{\"stage\":%d,\"epoch\":%d,\"loss\":%.17g,"
                "\"wall_ms\":%.17g,\"seed\":%llu}",
                m.stage, m.epoch, m.loss, m.wall_ms,
                static_cast<unsigned long long>(m.seed));
  return std::string(buf);
}

}  // namespace vcsl
