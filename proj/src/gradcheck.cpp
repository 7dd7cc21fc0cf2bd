#include "vcsl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcsl/attention.hpp"
#include "vcsl/augment.hpp"
#include "vcsl/corpus.hpp"
#include "vcsl/encoder.hpp"
#include "vcsl/losses.hpp"
#include "vcsl/masking.hpp"
#include "vcsl/pipeline.hpp"
#include "vcsl/rng.hpp"

namespace vcsl {

namespace {

// Small enough that a full central-difference sweep over every parameter of
// every objective finishes in seconds, yet wide enough that every code path
// (multi-head attention, pyramid pooling, multi-level taps) participates.
ModelConfig audit_model() {
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

CorpusSpec audit_corpus(uint64_t seed) {
  CorpusSpec spec;
  spec.datasets = 1;
  spec.volumes_each = 4;
  spec.depth = 4;
  spec.extent = 8;
  spec.classes = 2;
  spec.seed = seed;
  return spec;
}

// Parameter family: the leading dotted segment of the parameter name.
std::string group_of(const std::string& name) {
  const size_t dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

// Worst central-difference relative error over one leaf.  The analytic
// gradient is passed in (captured from a single backward sweep) so the
// fault-injection hook can perturb it before the comparison.
double fd_worst(ad::Graph& g, ad::Tensor loss, ad::Tensor leaf,
                std::span<const double> analytic, double step) {
  const std::vector<double> base = leaf.values();
  std::vector<double> probe = base;
  double worst = 0.0;
  for (size_t i = 0; i < base.size(); ++i) {
    probe[i] = base[i] + step;
    leaf.set_values(probe);
    g.forward();
    const double hi = loss.scalar();
    probe[i] = base[i] - step;
    leaf.set_values(probe);
    g.forward();
    const double lo = loss.scalar();
    probe[i] = base[i];
    const double numeric = (hi - lo) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) /
                       std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  leaf.set_values(base);
  g.forward();
  return worst;
}

// True when every assignment code in the graph is a gradient-free constant
// carrying a zero (or never-allocated) adjoint.  Requires at least one code
// so a wiring mistake that drops the constants entirely also fails.
bool codes_detached(const ad::Graph& g) {
  int seen = 0;
  for (size_t id = 0; id < g.node_count(); ++id) {
    const ad::Node& n = g.node(static_cast<int>(id));
    if (n.name != "code") continue;
    ++seen;
    if (n.requires_grad) return false;
    for (double v : n.grad)
      if (v != 0.0) return false;
  }
  return seen > 0;
}

// Runs backward once, captures per-parameter analytic gradients (perturbed
// where the corruption hook matches), then sweeps every element with central
// differences and folds the worst error into per-group entries.
void audit_objective(ad::Graph& g, Binder& binder, ad::Tensor loss,
                     const std::string& objective,
                     const GradCheckOptions& opts,
                     std::vector<GradCheckEntry>& out) {
  g.backward(loss);
  struct Leaf {
    ad::Tensor tensor;
    std::string group;
    std::vector<double> analytic;
  };
  std::vector<Leaf> leaves;
  for (const auto& [param, tensor] : binder.entries()) {
    if (!tensor.requires_grad()) continue;
    std::vector<double> analytic = tensor.grad();
    if (!opts.corrupt.empty() &&
        param->name.find(opts.corrupt) != std::string::npos) {
      for (double& v : analytic) v += opts.bump;
    }
    leaves.push_back({tensor, group_of(param->name), std::move(analytic)});
  }
  for (const Leaf& leaf : leaves) {
    const double err = fd_worst(g, loss, leaf.tensor, leaf.analytic,
                                opts.step);
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) {
      return e.objective == objective && e.group == leaf.group;
    });
    if (it == out.end())
      out.push_back({objective, leaf.group, err});
    else
      it->max_rel_err = std::max(it->max_rel_err, err);
  }
}

}  // namespace

GradCheckReport grad_check_all(const GradCheckOptions& opts) {
  if (!(opts.step > 0.0))
    throw std::runtime_error("grad_check_all: step must be positive");

  ModelState st = make_model_state(audit_model(), derive_seed(opts.seed, 1));
  // Jitter everything so zero-initialized tables (conv biases, offset output
  // layers, relative bias, decoder bias) contribute nontrivial gradients.
  Rng jitter(derive_seed(opts.seed, 2));
  st.for_each([&](Param& p) {
    for (double& v : p.v) v += jitter.uniform(-0.2, 0.2);
  });

  const Corpus corpus = generate_corpus(audit_corpus(derive_seed(opts.seed, 3)));
  const std::vector<const Volume*> views = training_view(corpus);
  const TransformSpec aug;  // stochastic views exercise the crop/resize path

  GradCheckReport report;
  report.codes_detached = true;

  {  // Swapped slice clustering: encoder + prototypes.
    ad::Graph g;
    Binder binder(g);
    BoundEncoder enc = bind_encoder(g, binder, st.encoder, st.cfg.encoder,
                                    /*trainable=*/true);
    ad::Tensor protos = binder.bind(st.prototypes, /*trainable=*/true);
    Rng pick(derive_seed(opts.seed, 4));
    std::vector<ad::Tensor> za, zb;
    for (int b = 0; b < 2; ++b) {
      const Volume* vol = views[pick.below(views.size())];
      const Slice slice = vol->slice_copy(
          static_cast<int>(pick.below(static_cast<size_t>(vol->depth))));
      za.push_back(encode_slice(
          g, enc, augment_slice(slice, aug, derive_seed(opts.seed, 5, b, 0))));
      zb.push_back(encode_slice(
          g, enc, augment_slice(slice, aug, derive_seed(opts.seed, 5, b, 1))));
    }
    ad::Tensor loss = batch_swapped_loss(g, za, zb, protos, {});
    audit_objective(g, binder, loss, "slice-clustering", opts, report.entries);
    report.codes_detached = report.codes_detached && codes_detached(g);
  }

  {  // Masked slice prediction: encoder + attention + mask token + decoder.
    ad::Graph g;
    Binder binder(g);
    BoundEncoder enc = bind_encoder(g, binder, st.encoder, st.cfg.encoder,
                                    /*trainable=*/true);
    BoundAttention stack = bind_attention(g, binder, st.attention,
                                          st.cfg.attention,
                                          /*trainable=*/true);
    BoundMaskHead head = bind_mask_head(g, binder, st.mask_head,
                                        st.cfg.encoder.taps,
                                        /*trainable=*/true);
    const Volume view = augment_volume(*views[0], aug,
                                       derive_seed(opts.seed, 6));
    ad::Tensor y = encode_volume_rows(g, enc, view);
    const MaskPlan plan = sample_mask(view.depth, 0.25,
                                      derive_seed(opts.seed, 7));
    ad::Tensor loss = masked_prediction_loss(g, y, plan, head, stack,
                                             /*squared=*/false);
    audit_objective(g, binder, loss, "masked-prediction", opts,
                    report.entries);
  }

  {  // Swapped volume clustering: encoder + attention + prototypes.
    ad::Graph g;
    Binder binder(g);
    BoundEncoder enc = bind_encoder(g, binder, st.encoder, st.cfg.encoder,
                                    /*trainable=*/true);
    BoundAttention stack = bind_attention(g, binder, st.attention,
                                          st.cfg.attention,
                                          /*trainable=*/true);
    ad::Tensor protos = binder.bind(st.prototypes, /*trainable=*/true);
    std::vector<ad::Tensor> za, zb;
    for (int b = 0; b < 2; ++b) {
      const Volume* vol = views[static_cast<size_t>(b)];
      const Volume va = augment_volume(*vol, aug,
                                       derive_seed(opts.seed, 8, b, 0));
      const Volume vb = augment_volume(*vol, aug,
                                       derive_seed(opts.seed, 8, b, 1));
      za.push_back(volume_embed(g, stack, encode_volume_rows(g, enc, va))
                       .embedding);
      zb.push_back(volume_embed(g, stack, encode_volume_rows(g, enc, vb))
                       .embedding);
    }
    ad::Tensor loss = batch_swapped_loss(g, za, zb, protos, {});
    audit_objective(g, binder, loss, "volume-clustering", opts,
                    report.entries);
    report.codes_detached = report.codes_detached && codes_detached(g);
  }

  for (const GradCheckEntry& e : report.entries)
    report.worst = std::max(report.worst, e.max_rel_err);
  return report;
}

std::string grad_check_json(const GradCheckReport& report) {
  std::string out = "{\"codes_detached\":";
  out += report.codes_detached ? "true" : "false";
  char buf[64];
  std::snprintf(buf, sizeof(buf), ",\"worst\":%.17g,\"entries\":[",
                report.worst);
  out += buf;
  for (size_t i = 0; i < report.entries.size(); ++i) {
    const GradCheckEntry& e = report.entries[i];
    if (i > 0) out += ',';
    out += "{\"objective\":\"" + e.objective + "\",\"group\":\"" + e.group +
           "\",";
    std::snprintf(buf, sizeof(buf), "\"max_rel_err\":%.17g}", e.max_rel_err);
    out += buf;
  }
  out += "]}";
  return out;
}

}  // namespace vcsl
