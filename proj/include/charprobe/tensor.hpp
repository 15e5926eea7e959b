#pragma once

// Dense tensors and a tape-style reverse-mode differentiation graph.
//
// Every tensor is a row-major dense matrix of doubles; vectors are n x 1
// columns. There is no implicit broadcasting: the only shape-changing
// arithmetic is add_bias, which adds one vector to every row.

#include <charprobe/rng.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace charprobe {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

std::string shape_string(const Matrix& m);

/// A named trainable tensor and its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns the trainable tensors of a model. Addresses of stored parameters are
/// stable for the lifetime of the set, so graphs may hold raw pointers.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter& add(const std::string& name, Matrix value);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return items_.size(); }
  // Insertion order.
  Parameter& operator[](std::size_t i) { return *items_[i]; }
  const Parameter& operator[](std::size_t i) const { return *items_[i]; }

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
  std::map<std::string, std::size_t> index_;
};

using NodeId = int;

/// Append-only computation graph. Build the forward pass by calling the op
/// methods, then call backward() once on a 1 x 1 loss node. Gradients of
/// parameter nodes are accumulated into Parameter::grad; gradients of other
/// nodes are readable through grad().
class Graph {
 public:
  Graph() { nodes_.reserve(1024); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  NodeId input(Matrix value);
  // Repeated calls with the same parameter return the same node.
  NodeId parameter(Parameter& p);
  // Parameter value used read-only: no gradient reaches `p`. The graph
  // references the value, so `p` must outlive it.
  NodeId constant(const Parameter& p);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  // Adds vector `bias` (length = cols of x) to every row of x.
  NodeId add_bias(NodeId x, NodeId bias);
  // Row `index` of `table`, returned as a column vector.
  NodeId lookup(NodeId table, int index);
  // Vertical concatenation of two column vectors.
  NodeId concat(NodeId a, NodeId b);
  // Rows [start, start + count) of a.
  NodeId slice(NodeId a, int start, int count);
  // -log softmax(logits)[gold] for a column vector of logits; returns 1 x 1.
  NodeId softmax_nll(NodeId logits, int gold);

  const Matrix& value(NodeId id) const;
  double scalar(NodeId id) const;
  // Zero-sized if backward() never reached the node.
  const Matrix& grad(NodeId id) const;

  void backward(NodeId loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    input, param, matmul, add, mul, tanh, sigmoid, add_bias, lookup, concat, slice, softmax_nll
  };

  struct Node {
    explicit Node(Op o, NodeId in_a = -1, NodeId in_b = -1) : op(o), a(in_a), b(in_b) {}
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    int aux = 0;
    Parameter* param = nullptr;        // trainable parameter
    const Matrix* ref_value = nullptr;  // value held outside the graph
    Matrix value;
    Matrix grad;
    Matrix cache;
  };

  NodeId push(Node node);
  void check_id(NodeId id) const;
  Matrix& grad_slot(NodeId id);
  template <typename Expr>
  void accumulate(NodeId id, const Expr& delta);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, NodeId> param_nodes_;
  std::unordered_map<const Parameter*, NodeId> constant_nodes_;
  bool backward_done_ = false;
};

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// 1 / (1 - rate). Callers reuse one mask for every step of a sequence.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);

/// Glorot (Xavier) uniform matrix with bound sqrt(6 / (fan_in + fan_out)),
/// fan_in = cols, fan_out = rows.
Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace charprobe
