#pragma once

// Reverse-mode automatic differentiation over rank-2 f64 tensors.
//
// A Graph owns nodes in creation order, which is also a valid topological
// order: builder methods evaluate eagerly, so a node's value exists the
// moment it is created.  Leaves can be re-bound with set_values(); forward()
// then recomputes every derived node in order, which is what the
// finite-difference checker uses to probe the same graph repeatedly.
// backward() seeds a scalar loss with 1 and sweeps the tape in reverse,
// accumulating adjoints with "+=" so shared subexpressions and re-used
// parameters combine correctly.  Gradients only flow along paths where
// requires_grad is set; everything else keeps a zero gradient.
//
// All arithmetic is sequential and routed through the kernel layer, so a
// graph evaluates bit-identically for identical inputs on a fixed backend.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vcsl::ad {

class Graph;

enum class Op : uint8_t {
  kLeaf,
  kAdd,
  kAddRowVec,
  kMul,
  kScale,
  kMatMul,
  kMatMulNT,
  kExp,
  kLog,
  kTanh,
  kSoftmaxRows,
  kL2NormalizeRows,
  kRowsL2Norm,
  kConcatRows,
  kConcatCols,
  kGatherElems,
  kGatherRows,
  kReplaceRows,
  kSliceCols,
  kLerpRows,
  kReduceSum,
  kReduceMean,
  kReshape,
};

const char* op_name(Op op);

// Error tied to a specific node so callers can locate the offending
// computation: message carries op, node id, and the leaf name when present.
class AdError : public std::runtime_error {
 public:
  AdError(const std::string& msg, int node_id, Op op)
      : std::runtime_error(msg), node_id_(node_id), op_(op) {}
  int node_id() const { return node_id_; }
  Op op() const { return op_; }

 private:
  int node_id_;
  Op op_;
};

// Lightweight handle into a Graph; copyable, valid as long as the graph is.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Graph* g, int id) : graph_(g), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  int id() const { return id_; }
  Graph* graph() const { return graph_; }

  int rows() const;
  int cols() const;
  size_t size() const;
  bool requires_grad() const;
  const std::string& name() const;

  const std::vector<double>& values() const;
  const std::vector<double>& grad() const;
  double value_at(size_t i) const { return values()[i]; }
  // Value of a [1 x 1] tensor; throws otherwise.
  double scalar() const;

  // Rebinds a leaf's contents and marks the graph dirty (forward() required
  // before the next backward()).  Only valid on leaves.
  void set_values(std::span<const double> v);

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

struct Node {
  Op op = Op::kLeaf;
  int rows = 0;
  int cols = 0;
  bool requires_grad = false;
  std::vector<int> parents;
  std::vector<double> val;
  std::vector<double> grad;      // sized during backward()
  double alpha = 0.0;            // kScale factor
  std::vector<int64_t> aux;      // gather indices / row mask / column bounds
  std::string name;              // optional label, used in error messages

  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // --- leaves ---

  Tensor leaf(int rows, int cols, std::span<const double> v,
              bool requires_grad, std::string name = {});
  Tensor constant(int rows, int cols, std::span<const double> v,
                  std::string name = {});
  Tensor constant_scalar(double v);
  Tensor constant_fill(int rows, int cols, double v, std::string name = {});
  // Constant copy of t's current values: blocks gradient flow through t.
  Tensor detach(Tensor t);

  // --- elementwise and linear algebra ---

  Tensor add(Tensor a, Tensor b);
  Tensor add_rowvec(Tensor m, Tensor v);  // m [r x c] + v [1 x c] per row
  Tensor sub(Tensor a, Tensor b);         // add(a, scale(b, -1))
  Tensor mul(Tensor a, Tensor b);         // elementwise
  Tensor scale(Tensor a, double alpha);
  Tensor matmul(Tensor a, Tensor b);      // [m x k] * [k x n]
  Tensor matmul_nt(Tensor a, Tensor b);   // [m x k] * ([n x k])^T
  Tensor exp(Tensor a);
  Tensor log(Tensor a);
  Tensor tanh(Tensor a);

  // --- row-structured ops ---

  Tensor softmax_rows(Tensor a);          // max-subtracted, rows sum to 1
  Tensor l2_normalize_rows(Tensor a);     // unit rows; all-zero row -> error
  Tensor rows_l2_norm(Tensor a);          // [r x c] -> [r x 1]
  Tensor concat_rows(const std::vector<Tensor>& parts);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor gather_rows(Tensor a, std::vector<int64_t> row_ids);
  // Copies `row` ([1 x c]) over every row of `a` whose mask entry is 1.
  Tensor replace_rows(Tensor a, Tensor row, const std::vector<uint8_t>& mask);
  Tensor slice_cols(Tensor a, int c0, int c1);  // half-open [c0, c1)
  // Flat-index gather; index -1 reads an implicit zero (used for padding).
  Tensor gather_elems(Tensor a, std::vector<int64_t> flat_idx, int rows,
                      int cols);
  // Linear interpolation between consecutive rows of `table` at (possibly
  // fractional) positions; positions clamp to [0, rows-1], and clamped
  // positions get zero position-gradient.  Output is [#positions x cols].
  Tensor lerp_rows(Tensor table, Tensor positions);

  // --- reductions and shape ---

  Tensor reduce_sum(Tensor a);
  Tensor reduce_mean(Tensor a);
  Tensor reshape(Tensor a, int rows, int cols);

  // --- evaluation ---

  // Recomputes every derived node in creation order; clears the dirty flag.
  void forward();
  // Reverse sweep from a [1 x 1] loss.  Zeroes all gradients first; throws
  // if the graph is dirty (leaf changed without forward()).
  void backward(Tensor loss);

  size_t node_count() const { return nodes_.size(); }
  bool dirty() const { return dirty_; }
  // Finite-value checking after each node evaluation (default on).
  void set_check_finite(bool on) { check_finite_ = on; }

  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

 private:
  friend class Tensor;
  Node& mutable_node(int id) { return nodes_[static_cast<size_t>(id)]; }
  Tensor make_node(Node n);
  void eval_node(Node& n, int id);
  void backprop_node(const Node& n, int id);
  void require_same_graph(Tensor t) const;
  void require_not_dirty(const char* what) const;

  std::vector<Node> nodes_;
  bool dirty_ = false;
  bool check_finite_ = true;
};

// Maximum over coordinates of |analytic - numeric| / max(1, |analytic|),
// where numeric is the central difference (L(x+h) - L(x-h)) / 2h evaluated
// by re-running forward().  `leaf` must be a leaf; `loss` must be scalar.
double check_gradient(Graph& g, Tensor loss, Tensor leaf, double step);

}  // namespace vcsl::ad
