#include "vcsl/autodiff.hpp"

#include <cmath>
#include <cstring>

#include "vcsl/kernels.hpp"

namespace vcsl::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kAddRowVec: return "add_rowvec";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kMatMul: return "matmul";
    case Op::kMatMulNT: return "matmul_nt";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kTanh: return "tanh";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kL2NormalizeRows: return "l2_normalize_rows";
    case Op::kRowsL2Norm: return "rows_l2_norm";
    case Op::kConcatRows: return "concat_rows";
    case Op::kConcatCols: return "concat_cols";
    case Op::kGatherElems: return "gather_elems";
    case Op::kGatherRows: return "gather_rows";
    case Op::kReplaceRows: return "replace_rows";
    case Op::kSliceCols: return "slice_cols";
    case Op::kLerpRows: return "lerp_rows";
    case Op::kReduceSum: return "reduce_sum";
    case Op::kReduceMean: return "reduce_mean";
    case Op::kReshape: return "reshape";
  }
  return "?";
}

namespace {

[[noreturn]] void fail(const std::string& msg, int node_id, Op op) {
  throw AdError("autodiff: " + std::string(op_name(op)) + " (node " +
                    std::to_string(node_id) + "): " + msg,
                node_id, op);
}

void require_positive_shape(int rows, int cols, Op op, int next_id) {
  if (rows <= 0 || cols <= 0)
    fail("shape extents must be positive, got [" + std::to_string(rows) +
             " x " + std::to_string(cols) + "]",
         next_id, op);
}

std::string shape_str(const Node& n) {
  return "[" + std::to_string(n.rows) + " x " + std::to_string(n.cols) + "]";
}

}  // namespace

// --- Tensor accessors ---

int Tensor::rows() const { return graph_->node(id_).rows; }
int Tensor::cols() const { return graph_->node(id_).cols; }
size_t Tensor::size() const { return graph_->node(id_).size(); }
bool Tensor::requires_grad() const { return graph_->node(id_).requires_grad; }
const std::string& Tensor::name() const { return graph_->node(id_).name; }
const std::vector<double>& Tensor::values() const {
  return graph_->node(id_).val;
}

const std::vector<double>& Tensor::grad() const {
  const Node& n = graph_->node(id_);
  if (n.grad.size() != n.size())
    throw AdError("autodiff: gradient of node " + std::to_string(id_) +
                      " requested before backward()",
                  id_, n.op);
  return n.grad;
}

double Tensor::scalar() const {
  const Node& n = graph_->node(id_);
  if (n.rows != 1 || n.cols != 1)
    fail("scalar() on non-scalar tensor " + shape_str(n), id_, n.op);
  return n.val[0];
}

void Tensor::set_values(std::span<const double> v) {
  Node& n = graph_->mutable_node(id_);
  if (n.op != Op::kLeaf)
    fail("set_values is only valid on leaves", id_, n.op);
  if (v.size() != n.size())
    fail("set_values size mismatch: tensor " + shape_str(n) + " given " +
             std::to_string(v.size()) + " values",
         id_, n.op);
  std::memcpy(n.val.data(), v.data(), v.size() * sizeof(double));
  graph_->dirty_ = true;
}

// --- graph plumbing ---

void Graph::require_same_graph(Tensor t) const {
  if (t.graph() != this)
    throw AdError("autodiff: tensor belongs to a different graph", t.id(),
                  Op::kLeaf);
  if (t.id() < 0 || static_cast<size_t>(t.id()) >= nodes_.size())
    throw AdError("autodiff: invalid tensor id", t.id(), Op::kLeaf);
}

void Graph::require_not_dirty(const char* what) const {
  if (dirty_)
    throw std::runtime_error(std::string("autodiff: ") + what +
                             " on a dirty graph; call forward() after "
                             "set_values()");
}

Tensor Graph::make_node(Node n) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(n));
  Node& stored = nodes_.back();
  if (stored.op != Op::kLeaf) {
    require_not_dirty("extending the graph");
    stored.val.assign(stored.size(), 0.0);
    eval_node(stored, id);
  } else if (check_finite_) {
    for (double x : stored.val)
      if (!std::isfinite(x))
        fail("non-finite value in leaf '" + stored.name + "'", id, Op::kLeaf);
  }
  return Tensor(this, id);
}

// --- leaves ---

Tensor Graph::leaf(int rows, int cols, std::span<const double> v,
                   bool requires_grad, std::string name) {
  require_positive_shape(rows, cols, Op::kLeaf,
                         static_cast<int>(nodes_.size()));
  if (v.size() != static_cast<size_t>(rows) * cols)
    fail("leaf '" + name + "': expected " + std::to_string(rows * cols) +
             " values, got " + std::to_string(v.size()),
         static_cast<int>(nodes_.size()), Op::kLeaf);
  Node n;
  n.op = Op::kLeaf;
  n.rows = rows;
  n.cols = cols;
  n.requires_grad = requires_grad;
  n.val.assign(v.begin(), v.end());
  n.name = std::move(name);
  return make_node(std::move(n));
}

Tensor Graph::constant(int rows, int cols, std::span<const double> v,
                       std::string name) {
  return leaf(rows, cols, v, false, std::move(name));
}

Tensor Graph::constant_scalar(double v) {
  return constant(1, 1, std::span<const double>(&v, 1));
}

Tensor Graph::constant_fill(int rows, int cols, double v, std::string name) {
  std::vector<double> vals(static_cast<size_t>(rows) * cols, v);
  return constant(rows, cols, vals, std::move(name));
}

Tensor Graph::detach(Tensor t) {
  require_same_graph(t);
  const Node& n = node(t.id());
  return constant(n.rows, n.cols, n.val,
                  n.name.empty() ? "detached" : n.name + ".detached");
}

// --- builders ---

namespace {

Node binary_node(Op op, const Node& a, const Node& b, int ida, int idb) {
  Node n;
  n.op = op;
  n.rows = a.rows;
  n.cols = a.cols;
  n.requires_grad = a.requires_grad || b.requires_grad;
  n.parents = {ida, idb};
  return n;
}

Node unary_node(Op op, const Node& a, int ida) {
  Node n;
  n.op = op;
  n.rows = a.rows;
  n.cols = a.cols;
  n.requires_grad = a.requires_grad;
  n.parents = {ida};
  return n;
}

}  // namespace

Tensor Graph::add(Tensor a, Tensor b) {
  require_same_graph(a);
  require_same_graph(b);
  const Node& na = node(a.id());
  const Node& nb = node(b.id());
  if (na.rows != nb.rows || na.cols != nb.cols)
    fail("shape mismatch " + shape_str(na) + " vs " + shape_str(nb),
         static_cast<int>(nodes_.size()), Op::kAdd);
  return make_node(binary_node(Op::kAdd, na, nb, a.id(), b.id()));
}

Tensor Graph::add_rowvec(Tensor m, Tensor v) {
  require_same_graph(m);
  require_same_graph(v);
  const Node& nm = node(m.id());
  const Node& nv = node(v.id());
  if (nv.rows != 1 || nv.cols != nm.cols)
    fail("row vector must be [1 x " + std::to_string(nm.cols) + "], got " +
             shape_str(nv),
         static_cast<int>(nodes_.size()), Op::kAddRowVec);
  return make_node(binary_node(Op::kAddRowVec, nm, nv, m.id(), v.id()));
}

Tensor Graph::sub(Tensor a, Tensor b) { return add(a, scale(b, -1.0)); }

Tensor Graph::mul(Tensor a, Tensor b) {
  require_same_graph(a);
  require_same_graph(b);
  const Node& na = node(a.id());
  const Node& nb = node(b.id());
  if (na.rows != nb.rows || na.cols != nb.cols)
    fail("shape mismatch " + shape_str(na) + " vs " + shape_str(nb),
         static_cast<int>(nodes_.size()), Op::kMul);
  return make_node(binary_node(Op::kMul, na, nb, a.id(), b.id()));
}

Tensor Graph::scale(Tensor a, double alpha) {
  require_same_graph(a);
  Node n = unary_node(Op::kScale, node(a.id()), a.id());
  n.alpha = alpha;
  return make_node(std::move(n));
}

Tensor Graph::matmul(Tensor a, Tensor b) {
  require_same_graph(a);
  require_same_graph(b);
  const Node& na = node(a.id());
  const Node& nb = node(b.id());
  if (na.cols != nb.rows)
    fail("inner dimension mismatch " + shape_str(na) + " * " + shape_str(nb),
         static_cast<int>(nodes_.size()), Op::kMatMul);
  Node n = binary_node(Op::kMatMul, na, nb, a.id(), b.id());
  n.rows = na.rows;
  n.cols = nb.cols;
  return make_node(std::move(n));
}

Tensor Graph::matmul_nt(Tensor a, Tensor b) {
  require_same_graph(a);
  require_same_graph(b);
  const Node& na = node(a.id());
  const Node& nb = node(b.id());
  if (na.cols != nb.cols)
    fail("inner dimension mismatch " + shape_str(na) + " * " + shape_str(nb) +
             "^T",
         static_cast<int>(nodes_.size()), Op::kMatMulNT);
  Node n = binary_node(Op::kMatMulNT, na, nb, a.id(), b.id());
  n.rows = na.rows;
  n.cols = nb.rows;
  return make_node(std::move(n));
}

Tensor Graph::exp(Tensor a) {
  require_same_graph(a);
  return make_node(unary_node(Op::kExp, node(a.id()), a.id()));
}

Tensor Graph::log(Tensor a) {
  require_same_graph(a);
  return make_node(unary_node(Op::kLog, node(a.id()), a.id()));
}

Tensor Graph::tanh(Tensor a) {
  require_same_graph(a);
  return make_node(unary_node(Op::kTanh, node(a.id()), a.id()));
}

Tensor Graph::softmax_rows(Tensor a) {
  require_same_graph(a);
  return make_node(unary_node(Op::kSoftmaxRows, node(a.id()), a.id()));
}

Tensor Graph::l2_normalize_rows(Tensor a) {
  require_same_graph(a);
  return make_node(unary_node(Op::kL2NormalizeRows, node(a.id()), a.id()));
}

Tensor Graph::rows_l2_norm(Tensor a) {
  require_same_graph(a);
  Node n = unary_node(Op::kRowsL2Norm, node(a.id()), a.id());
  n.cols = 1;
  return make_node(std::move(n));
}

Tensor Graph::concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty())
    fail("no parts to concatenate", static_cast<int>(nodes_.size()),
         Op::kConcatRows);
  Node n;
  n.op = Op::kConcatRows;
  n.cols = node(parts[0].id()).cols;
  for (Tensor t : parts) {
    require_same_graph(t);
    const Node& p = node(t.id());
    if (p.cols != n.cols)
      fail("column mismatch: expected " + std::to_string(n.cols) + ", got " +
               shape_str(p),
           static_cast<int>(nodes_.size()), Op::kConcatRows);
    n.rows += p.rows;
    n.requires_grad = n.requires_grad || p.requires_grad;
    n.parents.push_back(t.id());
  }
  return make_node(std::move(n));
}

Tensor Graph::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty())
    fail("no parts to concatenate", static_cast<int>(nodes_.size()),
         Op::kConcatCols);
  Node n;
  n.op = Op::kConcatCols;
  n.rows = node(parts[0].id()).rows;
  for (Tensor t : parts) {
    require_same_graph(t);
    const Node& p = node(t.id());
    if (p.rows != n.rows)
      fail("row mismatch: expected " + std::to_string(n.rows) + ", got " +
               shape_str(p),
           static_cast<int>(nodes_.size()), Op::kConcatCols);
    n.cols += p.cols;
    n.requires_grad = n.requires_grad || p.requires_grad;
    n.parents.push_back(t.id());
  }
  return make_node(std::move(n));
}

Tensor Graph::gather_rows(Tensor a, std::vector<int64_t> row_ids) {
  require_same_graph(a);
  const Node& na = node(a.id());
  if (row_ids.empty())
    fail("empty row selection", static_cast<int>(nodes_.size()),
         Op::kGatherRows);
  for (int64_t r : row_ids)
    if (r < 0 || r >= na.rows)
      fail("row index " + std::to_string(r) + " out of range for " +
               shape_str(na),
           static_cast<int>(nodes_.size()), Op::kGatherRows);
  Node n = unary_node(Op::kGatherRows, na, a.id());
  n.rows = static_cast<int>(row_ids.size());
  n.aux = std::move(row_ids);
  return make_node(std::move(n));
}

Tensor Graph::replace_rows(Tensor a, Tensor row,
                           const std::vector<uint8_t>& mask) {
  require_same_graph(a);
  require_same_graph(row);
  const Node& na = node(a.id());
  const Node& nr = node(row.id());
  if (nr.rows != 1 || nr.cols != na.cols)
    fail("replacement row must be [1 x " + std::to_string(na.cols) +
             "], got " + shape_str(nr),
         static_cast<int>(nodes_.size()), Op::kReplaceRows);
  if (mask.size() != static_cast<size_t>(na.rows))
    fail("mask length " + std::to_string(mask.size()) +
             " != row count " + std::to_string(na.rows),
         static_cast<int>(nodes_.size()), Op::kReplaceRows);
  Node n = binary_node(Op::kReplaceRows, na, nr, a.id(), row.id());
  n.aux.assign(mask.begin(), mask.end());
  return make_node(std::move(n));
}

Tensor Graph::slice_cols(Tensor a, int c0, int c1) {
  require_same_graph(a);
  const Node& na = node(a.id());
  if (c0 < 0 || c1 > na.cols || c0 >= c1)
    fail("invalid column range [" + std::to_string(c0) + ", " +
             std::to_string(c1) + ") for " + shape_str(na),
         static_cast<int>(nodes_.size()), Op::kSliceCols);
  Node n = unary_node(Op::kSliceCols, na, a.id());
  n.cols = c1 - c0;
  n.aux = {c0, c1};
  return make_node(std::move(n));
}

Tensor Graph::gather_elems(Tensor a, std::vector<int64_t> flat_idx, int rows,
                           int cols) {
  require_same_graph(a);
  require_positive_shape(rows, cols, Op::kGatherElems,
                         static_cast<int>(nodes_.size()));
  const Node& na = node(a.id());
  if (flat_idx.size() != static_cast<size_t>(rows) * cols)
    fail("index count " + std::to_string(flat_idx.size()) +
             " does not fill [" + std::to_string(rows) + " x " +
             std::to_string(cols) + "]",
         static_cast<int>(nodes_.size()), Op::kGatherElems);
  const int64_t limit = static_cast<int64_t>(na.size());
  for (int64_t i : flat_idx)
    if (i < -1 || i >= limit)
      fail("flat index " + std::to_string(i) + " out of range for " +
               shape_str(na),
           static_cast<int>(nodes_.size()), Op::kGatherElems);
  Node n = unary_node(Op::kGatherElems, na, a.id());
  n.rows = rows;
  n.cols = cols;
  n.aux = std::move(flat_idx);
  return make_node(std::move(n));
}

Tensor Graph::lerp_rows(Tensor table, Tensor positions) {
  require_same_graph(table);
  require_same_graph(positions);
  const Node& nt = node(table.id());
  const Node& np = node(positions.id());
  Node n;
  n.op = Op::kLerpRows;
  n.rows = static_cast<int>(np.size());
  n.cols = nt.cols;
  n.requires_grad = nt.requires_grad || np.requires_grad;
  n.parents = {table.id(), positions.id()};
  return make_node(std::move(n));
}

Tensor Graph::reduce_sum(Tensor a) {
  require_same_graph(a);
  Node n = unary_node(Op::kReduceSum, node(a.id()), a.id());
  n.rows = 1;
  n.cols = 1;
  return make_node(std::move(n));
}

Tensor Graph::reduce_mean(Tensor a) {
  require_same_graph(a);
  Node n = unary_node(Op::kReduceMean, node(a.id()), a.id());
  n.rows = 1;
  n.cols = 1;
  return make_node(std::move(n));
}

Tensor Graph::reshape(Tensor a, int rows, int cols) {
  require_same_graph(a);
  require_positive_shape(rows, cols, Op::kReshape,
                         static_cast<int>(nodes_.size()));
  const Node& na = node(a.id());
  if (static_cast<size_t>(rows) * cols != na.size())
    fail("cannot reshape " + shape_str(na) + " to [" + std::to_string(rows) +
             " x " + std::to_string(cols) + "]",
         static_cast<int>(nodes_.size()), Op::kReshape);
  Node n = unary_node(Op::kReshape, na, a.id());
  n.rows = rows;
  n.cols = cols;
  return make_node(std::move(n));
}

// --- forward evaluation ---

void Graph::eval_node(Node& n, int id) {
  const size_t cols = static_cast<size_t>(n.cols);
  auto p = [&](int slot) -> const Node& {
    return nodes_[static_cast<size_t>(n.parents[static_cast<size_t>(slot)])];
  };
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd:
      kern::add(p(0).val.data(), p(1).val.data(), n.val.data(), n.size());
      break;
    case Op::kAddRowVec: {
      const Node& m = p(0);
      const Node& v = p(1);
      for (int r = 0; r < n.rows; ++r)
        kern::add(m.val.data() + r * cols, v.val.data(),
                  n.val.data() + r * cols, cols);
      break;
    }
    case Op::kMul:
      kern::mul(p(0).val.data(), p(1).val.data(), n.val.data(), n.size());
      break;
    case Op::kScale:
      kern::scale(p(0).val.data(), n.alpha, n.val.data(), n.size());
      break;
    case Op::kMatMul:
      kern::matmul_nn(p(0).val.data(), p(1).val.data(), n.val.data(),
                      static_cast<size_t>(n.rows),
                      static_cast<size_t>(p(0).cols),
                      static_cast<size_t>(n.cols));
      break;
    case Op::kMatMulNT:
      kern::matmul_nt(p(0).val.data(), p(1).val.data(), n.val.data(),
                      static_cast<size_t>(n.rows),
                      static_cast<size_t>(p(0).cols),
                      static_cast<size_t>(n.cols));
      break;
    case Op::kExp:
      for (size_t i = 0; i < n.size(); ++i) n.val[i] = std::exp(p(0).val[i]);
      break;
    case Op::kLog:
      for (size_t i = 0; i < n.size(); ++i) n.val[i] = std::log(p(0).val[i]);
      break;
    case Op::kTanh:
      for (size_t i = 0; i < n.size(); ++i) n.val[i] = std::tanh(p(0).val[i]);
      break;
    case Op::kSoftmaxRows: {
      const Node& a = p(0);
      for (int r = 0; r < n.rows; ++r) {
        const double* x = a.val.data() + r * cols;
        double* y = n.val.data() + r * cols;
        const double m = kern::max_value(x, cols);
        for (size_t j = 0; j < cols; ++j) y[j] = std::exp(x[j] - m);
        const double s = kern::sum(y, cols);
        kern::scale(y, 1.0 / s, y, cols);
      }
      break;
    }
    case Op::kL2NormalizeRows: {
      const Node& a = p(0);
      for (int r = 0; r < n.rows; ++r) {
        const double* x = a.val.data() + r * cols;
        const double sq = kern::dot(x, x, cols);
        if (sq == 0.0)
          fail("cannot normalize all-zero row " + std::to_string(r), id, n.op);
        kern::scale(x, 1.0 / std::sqrt(sq), n.val.data() + r * cols, cols);
      }
      break;
    }
    case Op::kRowsL2Norm: {
      const Node& a = p(0);
      const size_t acols = static_cast<size_t>(a.cols);
      for (int r = 0; r < n.rows; ++r) {
        const double* x = a.val.data() + r * acols;
        n.val[static_cast<size_t>(r)] = std::sqrt(kern::dot(x, x, acols));
      }
      break;
    }
    case Op::kConcatRows: {
      size_t off = 0;
      for (int parent : n.parents) {
        const Node& part = nodes_[static_cast<size_t>(parent)];
        std::memcpy(n.val.data() + off, part.val.data(),
                    part.size() * sizeof(double));
        off += part.size();
      }
      break;
    }
    case Op::kConcatCols: {
      size_t coff = 0;
      for (int parent : n.parents) {
        const Node& part = nodes_[static_cast<size_t>(parent)];
        const size_t pc = static_cast<size_t>(part.cols);
        for (int r = 0; r < n.rows; ++r)
          std::memcpy(n.val.data() + r * cols + coff,
                      part.val.data() + static_cast<size_t>(r) * pc,
                      pc * sizeof(double));
        coff += pc;
      }
      break;
    }
    case Op::kGatherElems: {
      const Node& a = p(0);
      for (size_t i = 0; i < n.size(); ++i) {
        const int64_t src = n.aux[i];
        n.val[i] = src < 0 ? 0.0 : a.val[static_cast<size_t>(src)];
      }
      break;
    }
    case Op::kGatherRows: {
      const Node& a = p(0);
      for (int r = 0; r < n.rows; ++r)
        std::memcpy(n.val.data() + static_cast<size_t>(r) * cols,
                    a.val.data() + static_cast<size_t>(n.aux[static_cast<size_t>(r)]) * cols,
                    cols * sizeof(double));
      break;
    }
    case Op::kReplaceRows: {
      const Node& a = p(0);
      const Node& row = p(1);
      for (int r = 0; r < n.rows; ++r) {
        const double* src = n.aux[static_cast<size_t>(r)] != 0
                                ? row.val.data()
                                : a.val.data() + static_cast<size_t>(r) * cols;
        std::memcpy(n.val.data() + static_cast<size_t>(r) * cols, src,
                    cols * sizeof(double));
      }
      break;
    }
    case Op::kSliceCols: {
      const Node& a = p(0);
      const size_t c0 = static_cast<size_t>(n.aux[0]);
      const size_t acols = static_cast<size_t>(a.cols);
      for (int r = 0; r < n.rows; ++r)
        std::memcpy(n.val.data() + static_cast<size_t>(r) * cols,
                    a.val.data() + static_cast<size_t>(r) * acols + c0,
                    cols * sizeof(double));
      break;
    }
    case Op::kLerpRows: {
      const Node& table = p(0);
      const Node& pos = p(1);
      const int last = table.rows - 1;
      for (int k = 0; k < n.rows; ++k) {
        double u = pos.val[static_cast<size_t>(k)];
        if (u < 0.0) u = 0.0;
        if (u > last) u = static_cast<double>(last);
        double* out = n.val.data() + static_cast<size_t>(k) * cols;
        if (last == 0) {
          std::memcpy(out, table.val.data(), cols * sizeof(double));
          continue;
        }
        int lo = static_cast<int>(std::floor(u));
        if (lo > last - 1) lo = last - 1;
        const double f = u - lo;
        const double* r0 = table.val.data() + static_cast<size_t>(lo) * cols;
        const double* r1 = r0 + cols;
        for (size_t j = 0; j < cols; ++j)
          out[j] = (1.0 - f) * r0[j] + f * r1[j];
      }
      break;
    }
    case Op::kReduceSum:
      n.val[0] = kern::sum(p(0).val.data(), p(0).size());
      break;
    case Op::kReduceMean:
      n.val[0] = kern::sum(p(0).val.data(), p(0).size()) /
                 static_cast<double>(p(0).size());
      break;
    case Op::kReshape:
      std::memcpy(n.val.data(), p(0).val.data(), n.size() * sizeof(double));
      break;
  }
  if (check_finite_ && n.op != Op::kLeaf) {
    for (size_t i = 0; i < n.size(); ++i)
      if (!std::isfinite(n.val[i]))
        fail("produced non-finite value at flat index " + std::to_string(i) +
                 (n.name.empty() ? "" : " in '" + n.name + "'"),
             id, n.op);
  }
}

void Graph::forward() {
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].op != Op::kLeaf) eval_node(nodes_[i], static_cast<int>(i));
  dirty_ = false;
}

// --- backward sweep ---

void Graph::backprop_node(const Node& n, int id) {
  const size_t cols = static_cast<size_t>(n.cols);
  auto parent = [&](int slot) -> Node& {
    return nodes_[static_cast<size_t>(n.parents[static_cast<size_t>(slot)])];
  };
  auto wants = [&](int slot) { return parent(slot).requires_grad; };
  const double* g = n.grad.data();

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd:
      if (wants(0)) kern::axpy(1.0, g, parent(0).grad.data(), n.size());
      if (wants(1)) kern::axpy(1.0, g, parent(1).grad.data(), n.size());
      break;
    case Op::kAddRowVec: {
      if (wants(0)) kern::axpy(1.0, g, parent(0).grad.data(), n.size());
      if (wants(1)) {
        double* gv = parent(1).grad.data();
        for (int r = 0; r < n.rows; ++r)
          kern::axpy(1.0, g + static_cast<size_t>(r) * cols, gv, cols);
      }
      break;
    }
    case Op::kMul: {
      const Node& a = parent(0);
      const Node& b = parent(1);
      if (wants(0)) {
        double* ga = parent(0).grad.data();
        for (size_t i = 0; i < n.size(); ++i) ga[i] += g[i] * b.val[i];
      }
      if (wants(1)) {
        double* gb = parent(1).grad.data();
        for (size_t i = 0; i < n.size(); ++i) gb[i] += g[i] * a.val[i];
      }
      break;
    }
    case Op::kScale:
      if (wants(0)) kern::axpy(n.alpha, g, parent(0).grad.data(), n.size());
      break;
    case Op::kMatMul: {
      // C = A[m x k] * B[k x n]; dA += G * B^T, dB += A^T * G
      const Node& a = parent(0);
      const Node& b = parent(1);
      const size_t m = static_cast<size_t>(n.rows);
      const size_t k = static_cast<size_t>(a.cols);
      const size_t nn = static_cast<size_t>(n.cols);
      if (wants(0))
        kern::matmul_nt(g, b.val.data(), parent(0).grad.data(), m, nn, k,
                        true);
      if (wants(1))
        kern::matmul_tn(a.val.data(), g, parent(1).grad.data(), k, m, nn,
                        true);
      break;
    }
    case Op::kMatMulNT: {
      // C = A[m x k] * B[n x k]^T; dA += G * B, dB += G^T * A
      const Node& a = parent(0);
      const Node& b = parent(1);
      const size_t m = static_cast<size_t>(n.rows);
      const size_t k = static_cast<size_t>(a.cols);
      const size_t nn = static_cast<size_t>(n.cols);
      if (wants(0))
        kern::matmul_nn(g, b.val.data(), parent(0).grad.data(), m, nn, k,
                        true);
      if (wants(1))
        kern::matmul_tn(g, a.val.data(), parent(1).grad.data(), nn, m, k,
                        true);
      break;
    }
    case Op::kExp:
      if (wants(0)) {
        double* ga = parent(0).grad.data();
        for (size_t i = 0; i < n.size(); ++i) ga[i] += g[i] * n.val[i];
      }
      break;
    case Op::kLog:
      if (wants(0)) {
        const Node& a = parent(0);
        double* ga = parent(0).grad.data();
        for (size_t i = 0; i < n.size(); ++i) ga[i] += g[i] / a.val[i];
      }
      break;
    case Op::kTanh:
      if (wants(0)) {
        double* ga = parent(0).grad.data();
        for (size_t i = 0; i < n.size(); ++i)
          ga[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
      }
      break;
    case Op::kSoftmaxRows:
      if (wants(0)) {
        double* ga = parent(0).grad.data();
        for (int r = 0; r < n.rows; ++r) {
          const double* y = n.val.data() + static_cast<size_t>(r) * cols;
          const double* gr = g + static_cast<size_t>(r) * cols;
          const double s = kern::dot(gr, y, cols);
          double* gar = ga + static_cast<size_t>(r) * cols;
          for (size_t j = 0; j < cols; ++j) gar[j] += y[j] * (gr[j] - s);
        }
      }
      break;
    case Op::kL2NormalizeRows:
      if (wants(0)) {
        const Node& a = parent(0);
        double* ga = parent(0).grad.data();
        for (int r = 0; r < n.rows; ++r) {
          const double* x = a.val.data() + static_cast<size_t>(r) * cols;
          const double* y = n.val.data() + static_cast<size_t>(r) * cols;
          const double* gr = g + static_cast<size_t>(r) * cols;
          const double norm = std::sqrt(kern::dot(x, x, cols));
          const double s = kern::dot(y, gr, cols);
          double* gar = ga + static_cast<size_t>(r) * cols;
          for (size_t j = 0; j < cols; ++j)
            gar[j] += (gr[j] - y[j] * s) / norm;
        }
      }
      break;
    case Op::kRowsL2Norm:
      if (wants(0)) {
        const Node& a = parent(0);
        const size_t acols = static_cast<size_t>(a.cols);
        double* ga = parent(0).grad.data();
        for (int r = 0; r < n.rows; ++r) {
          const double norm = n.val[static_cast<size_t>(r)];
          if (norm == 0.0) continue;  // zero row: pick subgradient 0
          kern::axpy(g[static_cast<size_t>(r)] / norm,
                     a.val.data() + static_cast<size_t>(r) * acols,
                     ga + static_cast<size_t>(r) * acols, acols);
        }
      }
      break;
    case Op::kConcatRows: {
      size_t off = 0;
      for (size_t slot = 0; slot < n.parents.size(); ++slot) {
        Node& part = nodes_[static_cast<size_t>(n.parents[slot])];
        if (part.requires_grad)
          kern::axpy(1.0, g + off, part.grad.data(), part.size());
        off += part.size();
      }
      break;
    }
    case Op::kConcatCols: {
      size_t coff = 0;
      for (size_t slot = 0; slot < n.parents.size(); ++slot) {
        Node& part = nodes_[static_cast<size_t>(n.parents[slot])];
        const size_t pc = static_cast<size_t>(part.cols);
        if (part.requires_grad)
          for (int r = 0; r < n.rows; ++r)
            kern::axpy(1.0, g + static_cast<size_t>(r) * cols + coff,
                       part.grad.data() + static_cast<size_t>(r) * pc, pc);
        coff += pc;
      }
      break;
    }
    case Op::kGatherElems:
      if (wants(0)) {
        double* ga = parent(0).grad.data();
        for (size_t i = 0; i < n.size(); ++i)
          if (n.aux[i] >= 0) ga[static_cast<size_t>(n.aux[i])] += g[i];
      }
      break;
    case Op::kGatherRows:
      if (wants(0)) {
        double* ga = parent(0).grad.data();
        for (int r = 0; r < n.rows; ++r)
          kern::axpy(1.0, g + static_cast<size_t>(r) * cols,
                     ga + static_cast<size_t>(n.aux[static_cast<size_t>(r)]) * cols,
                     cols);
      }
      break;
    case Op::kReplaceRows: {
      for (int r = 0; r < n.rows; ++r) {
        const bool masked = n.aux[static_cast<size_t>(r)] != 0;
        if (masked && wants(1))
          kern::axpy(1.0, g + static_cast<size_t>(r) * cols,
                     parent(1).grad.data(), cols);
        if (!masked && wants(0))
          kern::axpy(1.0, g + static_cast<size_t>(r) * cols,
                     parent(0).grad.data() + static_cast<size_t>(r) * cols,
                     cols);
      }
      break;
    }
    case Op::kSliceCols:
      if (wants(0)) {
        Node& a = parent(0);
        const size_t c0 = static_cast<size_t>(n.aux[0]);
        const size_t acols = static_cast<size_t>(a.cols);
        for (int r = 0; r < n.rows; ++r)
          kern::axpy(1.0, g + static_cast<size_t>(r) * cols,
                     a.grad.data() + static_cast<size_t>(r) * acols + c0,
                     cols);
      }
      break;
    case Op::kLerpRows: {
      Node& table = parent(0);
      Node& pos = parent(1);
      const int last = table.rows - 1;
      for (int k = 0; k < n.rows; ++k) {
        const double u_raw = pos.val[static_cast<size_t>(k)];
        const double* gk = g + static_cast<size_t>(k) * cols;
        if (last == 0) {
          if (wants(0)) kern::axpy(1.0, gk, table.grad.data(), cols);
          continue;  // single row: position has no effect
        }
        double u = u_raw < 0.0 ? 0.0 : (u_raw > last ? last : u_raw);
        int lo = static_cast<int>(std::floor(u));
        if (lo > last - 1) lo = last - 1;
        const double f = u - lo;
        if (wants(0)) {
          double* t0 = table.grad.data() + static_cast<size_t>(lo) * cols;
          kern::axpy(1.0 - f, gk, t0, cols);
          kern::axpy(f, gk, t0 + cols, cols);
        }
        if (wants(1) && u_raw >= 0.0 && u_raw <= last) {
          const double* r0 = table.val.data() + static_cast<size_t>(lo) * cols;
          double acc = 0.0;
          for (size_t j = 0; j < cols; ++j)
            acc += gk[j] * (r0[cols + j] - r0[j]);
          pos.grad[static_cast<size_t>(k)] += acc;
        }
      }
      break;
    }
    case Op::kReduceSum:
      if (wants(0)) {
        double* ga = parent(0).grad.data();
        const double gv = g[0];
        for (size_t i = 0; i < parent(0).size(); ++i) ga[i] += gv;
      }
      break;
    case Op::kReduceMean:
      if (wants(0)) {
        double* ga = parent(0).grad.data();
        const double gv = g[0] / static_cast<double>(parent(0).size());
        for (size_t i = 0; i < parent(0).size(); ++i) ga[i] += gv;
      }
      break;
    case Op::kReshape:
      if (wants(0)) kern::axpy(1.0, g, parent(0).grad.data(), n.size());
      break;
  }
  (void)id;
}

void Graph::backward(Tensor loss) {
  require_same_graph(loss);
  require_not_dirty("backward()");
  const Node& ln = node(loss.id());
  if (ln.rows != 1 || ln.cols != 1)
    fail("backward() requires a [1 x 1] loss, got " + shape_str(ln),
         loss.id(), ln.op);
  for (Node& n : nodes_) n.grad.assign(n.size(), 0.0);
  nodes_[static_cast<size_t>(loss.id())].grad[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || n.op == Op::kLeaf) continue;
    backprop_node(n, id);
  }
}

// --- finite-difference validation ---

double check_gradient(Graph& g, Tensor loss, Tensor leaf, double step) {
  if (step <= 0.0)
    throw std::runtime_error("check_gradient: step must be positive");
  if (g.node(leaf.id()).op != Op::kLeaf)
    throw std::runtime_error("check_gradient: target is not a leaf");
  if (leaf.size() == 0)
    throw std::runtime_error("check_gradient: degenerate zero-size tensor");
  if (!leaf.requires_grad())
    throw std::runtime_error("check_gradient: leaf does not require grad");

  if (g.dirty()) g.forward();
  g.backward(loss);
  const std::vector<double> analytic = leaf.grad();
  std::vector<double> x(leaf.values());

  double max_err = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    leaf.set_values(x);
    g.forward();
    const double up = loss.scalar();
    x[i] = saved - step;
    leaf.set_values(x);
    g.forward();
    const double down = loss.scalar();
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err =
        std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    if (err > max_err) max_err = err;
  }
  leaf.set_values(x);
  g.forward();
  return max_err;
}

}  // namespace vcsl::ad
