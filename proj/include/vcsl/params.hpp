#pragma once

// Trainable parameter storage and its bridge into autodiff graphs.
//
// Params live outside any graph (they survive across batches); a Binder maps
// each Param to a single graph leaf, created on first use, so that a
// parameter shared by several parts of one computation accumulates all of
// its gradient contributions in one place.

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vcsl/autodiff.hpp"

namespace vcsl {

struct Param {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Param() = default;
  Param(std::string name_, int rows_, int cols_)
      : name(std::move(name_)),
        rows(rows_),
        cols(cols_),
        v(static_cast<size_t>(rows_) * cols_, 0.0) {}

  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

class Binder {
 public:
  explicit Binder(ad::Graph& g) : graph_(&g) {}

  // Returns the leaf for `p`, creating it on first use.  `trainable`
  // controls requires_grad; mixing trainable and frozen bindings of one
  // param within a graph is ambiguous and rejected.
  ad::Tensor bind(Param& p, bool trainable) {
    auto it = map_.find(&p);
    if (it != map_.end()) {
      if (it->second.requires_grad() != trainable)
        throw std::runtime_error("Binder: param '" + p.name +
                                 "' bound with conflicting trainable flags");
      return it->second;
    }
    ad::Tensor t = graph_->leaf(p.rows, p.cols, p.v, trainable, p.name);
    map_.emplace(&p, t);
    order_.emplace_back(&p, t);
    return t;
  }

  bool bound(const Param& p) const { return map_.count(&p) != 0; }

  ad::Tensor tensor_of(const Param& p) const {
    auto it = map_.find(&p);
    if (it == map_.end())
      throw std::runtime_error("Binder: param '" + p.name + "' is not bound");
    return it->second;
  }

  // All (param, leaf) pairs, in binding order.
  const std::vector<std::pair<Param*, ad::Tensor>>& entries() const {
    return order_;
  }

 private:
  ad::Graph* graph_;
  std::unordered_map<const Param*, ad::Tensor> map_;
  std::vector<std::pair<Param*, ad::Tensor>> order_;
};

}  // namespace vcsl
