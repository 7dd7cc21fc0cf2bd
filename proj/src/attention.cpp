#include "vcsl/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vcsl {

void AttentionConfig::validate() const {
  if (blocks < 1)
    throw std::runtime_error("AttentionConfig: need at least one block, got " +
                             std::to_string(blocks));
  if (heads < 1 || head_dim < 1)
    throw std::runtime_error(
        "AttentionConfig: heads and head_dim must be positive");
  if (feature_dim < 1 || embed_dim < 1)
    throw std::runtime_error(
        "AttentionConfig: feature_dim and embed_dim must be positive");
  if (downsample < 1)
    throw std::runtime_error("AttentionConfig: downsample must be >= 1, got " +
                             std::to_string(downsample));
  if (max_seq < 2)
    throw std::runtime_error("AttentionConfig: max_seq must be >= 2, got " +
                             std::to_string(max_seq));
  if (offset_groups < 1 || heads % offset_groups != 0)
    throw std::runtime_error(
        "AttentionConfig: offset_groups must divide heads (" +
        std::to_string(offset_groups) + " groups, " + std::to_string(heads) +
        " heads)");
  if (group_width() < 2 || group_width() % 2 != 0)
    throw std::runtime_error(
        "AttentionConfig: per-group query width must be even and >= 2, got " +
        std::to_string(group_width()));
}

std::vector<double> reference_grid(int seq, int stride) {
  if (seq < 1)
    throw std::runtime_error("reference_grid: empty sequence");
  if (stride < 1)
    throw std::runtime_error("reference_grid: stride must be >= 1, got " +
                             std::to_string(stride));
  const int grid = (seq + stride - 1) / stride;
  std::vector<double> p(static_cast<size_t>(grid));
  if (grid == 1) {
    p[0] = (seq - 1) / 2.0;  // single point sits at the sequence midpoint
    return p;
  }
  // Endpoint-inclusive uniform spacing over [0, seq-1].
  const double step = static_cast<double>(seq - 1) / (grid - 1);
  for (int i = 0; i < grid; ++i) p[static_cast<size_t>(i)] = i * step;
  return p;
}

std::vector<double> positional_encoding_table(int seq, int width) {
  if (seq < 1 || width < 1)
    throw std::runtime_error("positional_encoding_table: empty table");
  std::vector<double> pe(static_cast<size_t>(seq) * width);
  const double log_base = std::log(10000.0);
  for (int i = 0; i < seq; ++i)
    for (int j = 0; j < width; ++j) {
      const int pair = j - (j % 2);  // sin/cos share a frequency
      const double freq = std::exp(-log_base * pair / width);
      const double angle = i * freq;
      pe[static_cast<size_t>(i) * width + j] =
          (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

namespace {

// Symmetric uniform init scaled by fan-in + fan-out.
void glorot_fill(Param& p, int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& x : p.v) x = rng.uniform(-a, a);
}

}  // namespace

AttentionParams make_attention_params(const AttentionConfig& cfg, Rng& rng) {
  cfg.validate();
  AttentionParams p;
  const int f = cfg.feature_dim;
  const int dh = cfg.head_dim;
  const int cat = cfg.query_width();
  const int gw = cfg.group_width();
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string base = "attention.block" + std::to_string(b) + ".";
    AttentionBlockParams blk;
    for (int h = 0; h < cfg.heads; ++h) {
      const std::string head = base + "head" + std::to_string(h) + ".";
      Param wq(head + "wq", f, dh), wk(head + "wk", f, dh),
          wv(head + "wv", f, dh);
      glorot_fill(wq, f, dh, rng);
      glorot_fill(wk, f, dh, rng);
      glorot_fill(wv, f, dh, rng);
      blk.wq.push_back(std::move(wq));
      blk.wk.push_back(std::move(wk));
      blk.wv.push_back(std::move(wv));
    }
    blk.wo = Param(base + "wo", cat, f);
    glorot_fill(blk.wo, cat, f, rng);
    blk.bo = Param(base + "bo", 1, f);
    for (int gi = 0; gi < cfg.offset_groups; ++gi) {
      const std::string grp = base + "group" + std::to_string(gi) + ".offset.";
      Param w1(grp + "w1", gw, gw / 2);
      glorot_fill(w1, gw, gw / 2, rng);
      blk.off_w1.push_back(std::move(w1));
      blk.off_b1.emplace_back(grp + "b1", 1, gw / 2);
      // The last offset layer starts at zero so training begins from the
      // undeformed reference grid.
      blk.off_w2.emplace_back(grp + "w2", gw / 2, 1);
      blk.off_b2.emplace_back(grp + "b2", 1, 1);
    }
    blk.bias_table = Param(base + "bias", 2 * cfg.max_seq - 1, 1);
    blk.ffn_w1 = Param(base + "ffn.w1", f, 2 * f);
    glorot_fill(blk.ffn_w1, f, 2 * f, rng);
    blk.ffn_b1 = Param(base + "ffn.b1", 1, 2 * f);
    blk.ffn_w2 = Param(base + "ffn.w2", 2 * f, f);
    glorot_fill(blk.ffn_w2, 2 * f, f, rng);
    blk.ffn_b2 = Param(base + "ffn.b2", 1, f);
    p.blocks.push_back(std::move(blk));
  }
  p.out_proj = Param("attention.out_proj", f, cfg.embed_dim);
  glorot_fill(p.out_proj, f, cfg.embed_dim, rng);
  return p;
}

void AttentionParams::for_each(const std::function<void(Param&)>& fn) {
  for (auto& blk : blocks) {
    for (auto& p : blk.wq) fn(p);
    for (auto& p : blk.wk) fn(p);
    for (auto& p : blk.wv) fn(p);
    fn(blk.wo);
    fn(blk.bo);
    for (auto& p : blk.off_w1) fn(p);
    for (auto& p : blk.off_b1) fn(p);
    for (auto& p : blk.off_w2) fn(p);
    for (auto& p : blk.off_b2) fn(p);
    fn(blk.bias_table);
    fn(blk.ffn_w1);
    fn(blk.ffn_b1);
    fn(blk.ffn_w2);
    fn(blk.ffn_b2);
  }
  fn(out_proj);
}

BoundAttention bind_attention(ad::Graph& g, Binder& binder,
                              AttentionParams& params,
                              const AttentionConfig& cfg, bool trainable) {
  (void)g;
  cfg.validate();
  if (static_cast<int>(params.blocks.size()) != cfg.blocks)
    throw std::runtime_error("bind_attention: parameter set has " +
                             std::to_string(params.blocks.size()) +
                             " blocks, config wants " +
                             std::to_string(cfg.blocks));
  BoundAttention out;
  out.cfg = &cfg;
  for (auto& blk : params.blocks) {
    BoundAttention::Block bb;
    for (auto& p : blk.wq) bb.wq.push_back(binder.bind(p, trainable));
    for (auto& p : blk.wk) bb.wk.push_back(binder.bind(p, trainable));
    for (auto& p : blk.wv) bb.wv.push_back(binder.bind(p, trainable));
    bb.wo = binder.bind(blk.wo, trainable);
    bb.bo = binder.bind(blk.bo, trainable);
    for (auto& p : blk.off_w1) bb.off_w1.push_back(binder.bind(p, trainable));
    for (auto& p : blk.off_b1) bb.off_b1.push_back(binder.bind(p, trainable));
    for (auto& p : blk.off_w2) bb.off_w2.push_back(binder.bind(p, trainable));
    for (auto& p : blk.off_b2) bb.off_b2.push_back(binder.bind(p, trainable));
    bb.bias_table = binder.bind(blk.bias_table, trainable);
    bb.ffn_w1 = binder.bind(blk.ffn_w1, trainable);
    bb.ffn_b1 = binder.bind(blk.ffn_b1, trainable);
    bb.ffn_w2 = binder.bind(blk.ffn_w2, trainable);
    bb.ffn_b2 = binder.bind(blk.ffn_b2, trainable);
    out.blocks.push_back(std::move(bb));
  }
  out.out_proj = binder.bind(params.out_proj, trainable);
  return out;
}

namespace {

// One pre-norm block: deformable multi-head attention plus feed-forward,
// both residual.
ad::Tensor run_block(ad::Graph& g, const BoundAttention::Block& bp,
                     const AttentionConfig& cfg, ad::Tensor x,
                     BlockTrace& bt) {
  const int seq = x.rows();
  const int dh = cfg.head_dim;
  const int gw = cfg.group_width();
  const int heads_per_group = cfg.heads / cfg.offset_groups;

  ad::Tensor xn = g.l2_normalize_rows(x);

  std::vector<ad::Tensor> queries;
  queries.reserve(static_cast<size_t>(cfg.heads));
  for (int h = 0; h < cfg.heads; ++h)
    queries.push_back(g.matmul(xn, bp.wq[static_cast<size_t>(h)]));
  ad::Tensor q_cat = g.concat_cols(queries);  // [seq x heads*head_dim]

  const std::vector<double> grid = reference_grid(seq, cfg.downsample);
  const int dg = static_cast<int>(grid.size());
  ad::Tensor grid_t = g.constant(dg, 1, grid, "grid");
  // Query rows sampled at the reference points drive the offset MLPs.
  ad::Tensor q_grid = g.lerp_rows(q_cat, grid_t);  // [dg x heads*head_dim]

  std::vector<ad::Tensor> sampled;  // per group: [dg x feature_dim]
  for (int gi = 0; gi < cfg.offset_groups; ++gi) {
    ad::Tensor qg = g.slice_cols(q_grid, gi * gw, (gi + 1) * gw);
    ad::Tensor hidden = g.tanh(g.add_rowvec(
        g.matmul(qg, bp.off_w1[static_cast<size_t>(gi)]),
        bp.off_b1[static_cast<size_t>(gi)]));
    ad::Tensor raw = g.add_rowvec(
        g.matmul(hidden, bp.off_w2[static_cast<size_t>(gi)]),
        bp.off_b2[static_cast<size_t>(gi)]);
    // Saturates at one grid stride in either direction.
    ad::Tensor dp = g.scale(g.tanh(raw), cfg.max_offset());
    ad::Tensor pos = g.add(grid_t, dp);  // [dg x 1]
    bt.offsets.push_back(dp);
    bt.positions.push_back(pos);
    sampled.push_back(g.lerp_rows(xn, pos));
  }

  // Relative-distance bias: table row (max_seq-1) is distance zero, so the
  // lookup position for query i and key position u is u + (max_seq-1-i).
  std::vector<double> base(static_cast<size_t>(seq) * dg);
  for (int i = 0; i < seq; ++i)
    for (int j = 0; j < dg; ++j)
      base[static_cast<size_t>(i) * dg + j] =
          static_cast<double>(cfg.max_seq - 1 - i);
  ad::Tensor base_t = g.constant(seq, dg, base, "bias-base");

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(cfg.heads));
  for (int h = 0; h < cfg.heads; ++h) {
    const int gi = h / heads_per_group;
    ad::Tensor ytil = sampled[static_cast<size_t>(gi)];
    ad::Tensor keys = g.matmul(ytil, bp.wk[static_cast<size_t>(h)]);
    ad::Tensor vals = g.matmul(ytil, bp.wv[static_cast<size_t>(h)]);
    ad::Tensor logits = g.scale(
        g.matmul_nt(queries[static_cast<size_t>(h)], keys), inv_sqrt_dh);
    ad::Tensor pos_row =
        g.reshape(bt.positions[static_cast<size_t>(gi)], 1, dg);
    ad::Tensor bias_pos = g.add_rowvec(base_t, pos_row);
    ad::Tensor bias =
        g.reshape(g.lerp_rows(bp.bias_table, bias_pos), seq, dg);
    ad::Tensor attn = g.softmax_rows(g.add(logits, bias));
    ad::Tensor out = g.matmul(attn, vals);
    bt.heads.push_back(HeadTrace{attn, out});
    head_outs.push_back(out);
  }

  ad::Tensor mha =
      g.add_rowvec(g.matmul(g.concat_cols(head_outs), bp.wo), bp.bo);
  ad::Tensor x1 = g.add(x, mha);

  ad::Tensor xn2 = g.l2_normalize_rows(x1);
  ad::Tensor ff = g.add_rowvec(
      g.matmul(g.tanh(g.add_rowvec(g.matmul(xn2, bp.ffn_w1), bp.ffn_b1)),
               bp.ffn_w2),
      bp.ffn_b2);
  ad::Tensor out = g.add(x1, ff);
  bt.output = out;
  return out;
}

// Stride-2 average pooling along the sequence axis as a constant matmul.
ad::Tensor pool_halve(ad::Graph& g, ad::Tensor x) {
  const int seq = x.rows();
  const int half = seq / 2;
  std::vector<double> p(static_cast<size_t>(half) * seq, 0.0);
  for (int i = 0; i < half; ++i) {
    p[static_cast<size_t>(i) * seq + 2 * i] = 0.5;
    p[static_cast<size_t>(i) * seq + 2 * i + 1] = 0.5;
  }
  return g.matmul(g.constant(half, seq, p, "pool"), x);
}

StackTrace run_stack(ad::Graph& g, const BoundAttention& stack, ad::Tensor y,
                     bool pyramid) {
  const AttentionConfig& cfg = *stack.cfg;
  const int seq = y.rows();
  if (seq < 1) throw std::runtime_error("attention: empty input sequence");
  if (y.cols() != cfg.feature_dim)
    throw std::runtime_error("attention: input rows are " +
                             std::to_string(y.cols()) + " wide, expected " +
                             std::to_string(cfg.feature_dim));
  if (seq > cfg.max_seq)
    throw std::runtime_error("attention: sequence length " +
                             std::to_string(seq) + " exceeds max_seq " +
                             std::to_string(cfg.max_seq));
  if (pyramid && seq % cfg.pyramid_factor() != 0)
    throw std::runtime_error(
        "attention: sequence length " + std::to_string(seq) +
        " cannot be halved through " + std::to_string(cfg.blocks) +
        " blocks; need a multiple of " +
        std::to_string(cfg.pyramid_factor()) + " (at least " +
        std::to_string(cfg.pyramid_factor()) + " rows)");

  StackTrace trace;
  ad::Tensor x = y;
  if (cfg.positional_encoding) {
    const std::vector<double> pe =
        positional_encoding_table(seq, cfg.feature_dim);
    x = g.add(x, g.constant(seq, cfg.feature_dim, pe, "positional-encoding"));
  }
  for (int b = 0; b < cfg.blocks; ++b) {
    if (pyramid && b > 0) x = pool_halve(g, x);
    BlockTrace bt;
    x = run_block(g, stack.blocks[static_cast<size_t>(b)], cfg, x, bt);
    trace.blocks.push_back(std::move(bt));
  }
  trace.sequence = x;
  if (pyramid) {
    const int rows = x.rows();
    ad::Tensor mean =
        g.matmul(g.constant_fill(1, rows, 1.0 / rows, "mean-pool"), x);
    trace.embedding =
        g.l2_normalize_rows(g.matmul(mean, stack.out_proj));
    trace.has_embedding = true;
  }
  return trace;
}

}  // namespace

StackTrace volume_embed(ad::Graph& g, const BoundAttention& stack,
                        ad::Tensor y) {
  return run_stack(g, stack, y, true);
}

StackTrace sequence_features(ad::Graph& g, const BoundAttention& stack,
                             ad::Tensor y) {
  return run_stack(g, stack, y, false);
}

}  // namespace vcsl
