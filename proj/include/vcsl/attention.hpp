#pragma once

// Deformable-attention aggregator over slice-feature sequences.
//
// The input is a [seq x feature_dim] matrix of per-slice feature rows.  A
// stack of identical pre-norm blocks refines it; each block is
//   x + MHA(l2norm-rows(x))    followed by    x + FFN(l2norm-rows(x)).
// The attention is deformable: instead of attending to every row, each block
// lays a uniform reference grid of ceil(seq / downsample) points along the
// sequence, predicts a bounded scalar shift for every grid point from the
// (concatenated per-head) query rows sampled there, and linearly interpolates
// keys/values at the shifted positions.  Logits get a relative-position bias
// read from a per-block table by interpolation at the fractional distance
// between query index and sampled key position.
//
// Offset groups partition the query channels; each group runs its own small
// bounded MLP (width -> width/2 -> 1, tanh saturation scaled by the grid
// stride) and samples its share of the feature channels at its own shifted
// positions.  With one group (the default) every channel shares one offset
// per grid point.
//
// Two run modes share the parameters:
//   * volume_embed: stride-2 average pooling halves the sequence before every
//     block after the first (so the input length must be divisible by
//     2^(blocks-1)); the final rows are mean-pooled, projected to embed_dim,
//     and L2-normalized to a unit row.
//   * sequence_features: no pooling; returns one refined row per input row
//     (used by the masked-prediction head, which needs aligned positions).
//
// Every intermediate attention matrix is exposed in a trace so tests can
// assert row-stochasticity and compare heads against a dense reference.

#include <functional>
#include <vector>

#include "vcsl/autodiff.hpp"
#include "vcsl/params.hpp"
#include "vcsl/rng.hpp"

namespace vcsl {

struct AttentionConfig {
  int blocks = 4;
  int heads = 2;
  int head_dim = 16;
  int offset_groups = 1;
  int feature_dim = 32;  // width of the incoming feature rows
  int embed_dim = 16;    // width of the pooled volume embedding
  int downsample = 2;    // reference-grid stride; also bounds the offsets
  int max_seq = 32;      // longest supported input sequence
  bool positional_encoding = true;

  int query_width() const { return heads * head_dim; }
  int group_width() const { return query_width() / offset_groups; }
  double max_offset() const { return static_cast<double>(downsample); }
  // volume_embed halves the sequence blocks-1 times.
  int pyramid_factor() const { return 1 << (blocks - 1); }
  void validate() const;
};

struct AttentionBlockParams {
  std::vector<Param> wq, wk, wv;  // per head: [feature_dim x head_dim]
  Param wo;                       // [heads*head_dim x feature_dim]
  Param bo;                       // [1 x feature_dim]
  // Offset MLP per group: group_width -> group_width/2 -> 1.
  std::vector<Param> off_w1, off_b1, off_w2, off_b2;
  Param bias_table;  // [2*max_seq-1 x 1], one row per relative distance
  Param ffn_w1, ffn_b1;  // [feature_dim x 2*feature_dim], [1 x 2*feature_dim]
  Param ffn_w2, ffn_b2;  // [2*feature_dim x feature_dim], [1 x feature_dim]
};

struct AttentionParams {
  std::vector<AttentionBlockParams> blocks;
  Param out_proj;  // [feature_dim x embed_dim]

  void for_each(const std::function<void(Param&)>& fn);
};

AttentionParams make_attention_params(const AttentionConfig& cfg, Rng& rng);

// Parameter leaves of one stack inside one graph.
struct BoundAttention {
  const AttentionConfig* cfg = nullptr;
  struct Block {
    std::vector<ad::Tensor> wq, wk, wv;
    ad::Tensor wo, bo;
    std::vector<ad::Tensor> off_w1, off_b1, off_w2, off_b2;
    ad::Tensor bias_table;
    ad::Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };
  std::vector<Block> blocks;
  ad::Tensor out_proj;
};

BoundAttention bind_attention(ad::Graph& g, Binder& binder,
                              AttentionParams& params,
                              const AttentionConfig& cfg, bool trainable);

// Uniform reference grid along a length-`seq` sequence: ceil(seq/stride)
// points spanning [0, seq-1] inclusive (midpoint when only one fits).
std::vector<double> reference_grid(int seq, int stride);

// Deterministic sinusoidal position table, [seq x width].
std::vector<double> positional_encoding_table(int seq, int width);

// Everything one block computed, for inspection by tests.
struct HeadTrace {
  ad::Tensor attention;  // [rows x grid] row-stochastic weights
  ad::Tensor output;     // [rows x head_dim]
};
struct BlockTrace {
  std::vector<ad::Tensor> offsets;    // per group: [grid x 1], |.| <= bound
  std::vector<ad::Tensor> positions;  // per group: [grid x 1] sample points
  std::vector<HeadTrace> heads;
  ad::Tensor output;  // [rows x feature_dim] after both residual sublayers
};
struct StackTrace {
  std::vector<BlockTrace> blocks;
  ad::Tensor sequence;   // last block's rows
  ad::Tensor embedding;  // unit row [1 x embed_dim]; volume_embed mode only
  bool has_embedding = false;
};

// Pyramid mode: pool between blocks, then mean -> project -> L2-normalize.
StackTrace volume_embed(ad::Graph& g, const BoundAttention& stack,
                        ad::Tensor y);

// Dense mode: every block sees all rows; returns refined per-row features.
StackTrace sequence_features(ad::Graph& g, const BoundAttention& stack,
                             ad::Tensor y);

}  // namespace vcsl
