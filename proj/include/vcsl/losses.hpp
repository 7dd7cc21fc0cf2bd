#pragma once

// Swapped-prediction clustering losses.
//
// Each embedding is scored against the shared prototypes; the temperature-
// scaled softmax of those scores is the predicted cluster distribution p.
// The loss for a (embedding, code) pair is the cross-entropy -sum_k q_k log
// p_k.  Two views of one item predict each other's code ("swapped"
// prediction): pair_loss(a, b) = fit(z_a, q_b) + fit(z_b, q_a).
//
// Codes come from the entropic assignment over the stacked 2B views of a
// batch and enter the graph as constants: gradients reach the encoder and
// prototypes only through the softmax path, never through the assignment.
//
// The same machinery serves slice embeddings (stage 1) and volume embeddings
// (stage 3); only the embedding source differs.

#include <span>
#include <vector>

#include "vcsl/autodiff.hpp"
#include "vcsl/prototypes.hpp"

namespace vcsl {

struct ClusterLossConfig {
  double temperature = 0.1;
  SinkhornOptions sinkhorn;
};

// Cross-entropy of the predicted cluster distribution of z ([1 x d]) against
// a fixed code (renormalized to sum 1).  protos is the [H x d] prototype
// leaf; gradient flows to z and protos only.
ad::Tensor code_fit_loss(ad::Graph& g, ad::Tensor z,
                         std::span<const double> code, ad::Tensor protos,
                         double temperature);

// fit(z_a, code_b) + fit(z_b, code_a); bit-symmetric under swapping the two
// (embedding, code) pairs.
ad::Tensor swapped_pair_loss(ad::Graph& g, ad::Tensor z_a,
                             std::span<const double> code_a, ad::Tensor z_b,
                             std::span<const double> code_b, ad::Tensor protos,
                             double temperature);

// Codes for a batch of view pairs, assigned jointly over the stacked
// [2B x d] embedding matrix (view-a block first, then view-b).
struct JointCodes {
  CodeMatrix matrix;
  std::vector<std::vector<double>> a;  // code of item i's first view
  std::vector<std::vector<double>> b;  // code of item i's second view
};

JointCodes assign_joint_codes(const std::vector<ad::Tensor>& za,
                              const std::vector<ad::Tensor>& zb,
                              ad::Tensor protos,
                              const SinkhornOptions& opts);

// Mean swapped pair loss over a batch with jointly assigned codes.
// Requires at least two items.
ad::Tensor batch_swapped_loss(ad::Graph& g, const std::vector<ad::Tensor>& za,
                              const std::vector<ad::Tensor>& zb,
                              ad::Tensor protos,
                              const ClusterLossConfig& cfg);

}  // namespace vcsl
