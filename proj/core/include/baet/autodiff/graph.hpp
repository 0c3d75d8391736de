#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "baet/autodiff/tensor.hpp"

namespace baet::ad {

class NotScalarLoss : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by row-mean when the mask selects no rows.
class AllPadding : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Handle to a node recorded on a Graph. Only meaningful for the graph that created it.
class Var {
 public:
  Var() = default;
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return id_ != kInvalid; }
  friend bool operator==(Var, Var) = default;

 private:
  friend class Graph;
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  explicit Var(std::size_t id) : id_(id) {}
  std::size_t id_ = kInvalid;
};

enum class Mode { train, eval };

/// Row/key selection mask: nonzero = keep.
using Mask = std::vector<std::uint8_t>;
using MaskView = std::span<const std::uint8_t>;

/// Tape of primitive applications. Recording order is the topological order;
/// backward() walks it in exact reverse.
///
/// A graph is single-use and single-threaded. Leaves created with parameter()
/// reference external storage, which must outlive the graph.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Leaves
  Var constant(Tensor value);
  Var variable(Tensor value, bool requires_grad = true);
  /// Leaf over external storage. With sparse_grad, gather_rows() deposits row gradients
  /// sparsely instead of materialising a dense table-sized gradient.
  Var parameter(const Tensor& storage, bool sparse_grad = false);

  // Primitives
  Var matmul(Var a, Var b);
  /// Same shape, or b is a 1 x cols row broadcast over a's rows.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  /// Multiplies row r of x by s(r, 0); s is rows x 1.
  Var row_scale(Var x, Var s);
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(Var a, Var b);
  Var transpose(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var softmax_rows(Var a);
  /// softmax(Q K^T / sqrt(cols(Q))) V. Keys with key_mask[j] == false are excluded;
  /// a query row with every key masked yields a zero row.
  Var attention(Var q, Var k, Var v, MaskView key_mask = {});
  /// Elementwise maximum over same-shaped inputs; ties route gradient to the first.
  Var max_elementwise(std::span<const Var> parts);
  /// 1 x cols mean over rows where row_mask is true (all rows when empty). Throws AllPadding.
  Var mean_rows(Var x, MaskView row_mask = {});
  Var gather_rows(Var table, std::span<const std::size_t> indices);
  /// Inverted dropout: kept entries scaled by 1/(1-p). Identity in eval mode.
  Var dropout(Var x, double p, Mode mode, std::mt19937_64& rng);
  Var sum(Var a);
  Var sum_squares(Var a);
  /// -ln(clamp(probs(0, label), 1e-12, 1 - 1e-12)) as 1x1.
  Var nll(Var probs, std::size_t label);

  void backward(Var loss);

  const Tensor& value(Var v) const;
  /// Dense gradient; zeros if the node received none.
  Tensor grad(Var v) const;
  /// out += gradient of v (sparse-aware).
  void accumulate_grad(Var v, Tensor& out) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  /// Activation saved by a primitive for backward (attention: the probability matrix).
  const Tensor& saved(Var v) const { return nodes_.at(v.id()).aux; }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    Tensor aux;
    bool requires_grad = false;
    bool sparse = false;
    std::unordered_map<std::size_t, std::vector<double>> sparse_rows;
    std::function<void(Graph&, const Tensor&)> backward;
  };

  const Tensor& val(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  Tensor& grad_slot(std::size_t id);
  bool needs(Var v) const { return nodes_[v.id()].requires_grad; }
  Var push(Tensor value, bool requires_grad, std::function<void(Graph&, const Tensor&)> bw);
  void check(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace baet::ad
