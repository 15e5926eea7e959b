#include <charprobe/tensor.hpp>

#include <charprobe/error.hpp>

#include <cmath>

namespace charprobe {

std::string shape_string(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

ParameterSet::ParameterSet(const ParameterSet& other) { *this = other; }

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this == &other) return *this;
  items_.clear();
  index_.clear();
  for (const auto& p : other.items_) {
    add(p->name, p->value);
  }
  return *this;
}

Parameter& ParameterSet::add(const std::string& name, Matrix value) {
  if (index_.count(name) != 0) {
    throw ContractError("duplicate parameter name '" + name + "'");
  }
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(value);
  p->zero_grad();
  index_[name] = items_.size();
  items_.push_back(std::move(p));
  return *items_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw IndexError("no parameter named '" + name + "'");
  return *items_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw IndexError("no parameter named '" + name + "'");
  return *items_[it->second];
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p->grad.setZero();
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

// ---------------------------------------------------------------------------

NodeId Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::check_id(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw IndexError("graph node " + std::to_string(id) + " does not exist");
  }
}

const Matrix& Graph::value(NodeId id) const {
  check_id(id);
  const Node& n = nodes_[id];
  return n.ref_value != nullptr ? *n.ref_value : n.value;
}

double Graph::scalar(NodeId id) const {
  const Matrix& v = value(id);
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError("expected a 1x1 node, got " + shape_string(v));
  }
  return v(0, 0);
}

const Matrix& Graph::grad(NodeId id) const {
  check_id(id);
  const Node& n = nodes_[id];
  return n.param != nullptr ? n.param->grad : n.grad;
}

NodeId Graph::input(Matrix value) {
  Node n{Op::input};
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::parameter(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return it->second;
  if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
  Node n{Op::param};
  n.param = &p;
  n.ref_value = &p.value;
  NodeId id = push(std::move(n));
  param_nodes_.emplace(&p, id);
  return id;
}

NodeId Graph::constant(const Parameter& p) {
  auto it = constant_nodes_.find(&p);
  if (it != constant_nodes_.end()) return it->second;
  Node n{Op::input};
  n.ref_value = &p.value;
  NodeId id = push(std::move(n));
  constant_nodes_.emplace(&p, id);
  return id;
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.cols() != vb.rows()) {
    throw DimensionError("matmul: inner dimensions disagree: " + shape_string(va) + " x " +
                         shape_string(vb));
  }
  Node n{Op::matmul, a, b};
  n.value.noalias() = va * vb;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
    throw DimensionError("add: shapes differ: " + shape_string(va) + " vs " + shape_string(vb));
  }
  Node n{Op::add, a, b};
  n.value = va + vb;
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
    throw DimensionError("mul: shapes differ: " + shape_string(va) + " vs " + shape_string(vb));
  }
  Node n{Op::mul, a, b};
  n.value = va.cwiseProduct(vb);
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId a) {
  Node n{Op::tanh, a};
  n.value = value(a).array().tanh().matrix();
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
  Node n{Op::sigmoid, a};
  // 1 / (1 + e^-x) written via tanh so large |x| cannot overflow.
  n.value = (0.5 * (0.5 * value(a).array()).tanh() + 0.5).matrix();
  return push(std::move(n));
}

NodeId Graph::add_bias(NodeId x, NodeId bias) {
  const Matrix& vx = value(x);
  const Matrix& vb = value(bias);
  const bool column = vb.cols() == 1 && vb.rows() == vx.cols();
  const bool row = vb.rows() == 1 && vb.cols() == vx.cols();
  if (!column && !row) {
    throw DimensionError("add_bias: bias " + shape_string(vb) + " does not match rows of " +
                         shape_string(vx));
  }
  Node n{Op::add_bias, x, bias};
  n.value = vx;
  const Eigen::RowVectorXd b = column ? Eigen::RowVectorXd(vb.transpose()) : Eigen::RowVectorXd(vb);
  n.value.rowwise() += b;
  return push(std::move(n));
}

NodeId Graph::lookup(NodeId table, int index) {
  const Matrix& vt = value(table);
  if (index < 0 || index >= vt.rows()) {
    throw IndexError("lookup: index " + std::to_string(index) + " outside table of " +
                     std::to_string(vt.rows()) + " rows");
  }
  Node n{Op::lookup, table};
  n.aux = index;
  n.value = vt.row(index).transpose();
  return push(std::move(n));
}

NodeId Graph::concat(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.cols() != 1 || vb.cols() != 1) {
    throw DimensionError("concat: expects column vectors, got " + shape_string(va) + " and " +
                         shape_string(vb));
  }
  Node n{Op::concat, a, b};
  n.value.resize(va.rows() + vb.rows(), 1);
  n.value.topRows(va.rows()) = va;
  n.value.bottomRows(vb.rows()) = vb;
  return push(std::move(n));
}

NodeId Graph::slice(NodeId a, int start, int count) {
  const Matrix& va = value(a);
  if (start < 0 || count < 0 || start + count > va.rows()) {
    throw IndexError("slice: rows [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " + shape_string(va));
  }
  Node n{Op::slice, a};
  n.aux = start;
  n.value = va.middleRows(start, count);
  return push(std::move(n));
}

NodeId Graph::softmax_nll(NodeId logits, int gold) {
  const Matrix& v = value(logits);
  if (v.cols() != 1) throw DimensionError("softmax_nll: logits must be a column, got " + shape_string(v));
  if (gold < 0 || gold >= v.rows()) {
    throw IndexError("softmax_nll: gold index " + std::to_string(gold) + " outside " +
                     std::to_string(v.rows()) + " classes");
  }
  Node n{Op::softmax_nll, logits};
  n.aux = gold;
  const double top = v.maxCoeff();
  const Eigen::ArrayXd shifted = v.col(0).array() - top;
  const double log_z = std::log(shifted.exp().sum());
  n.cache = (shifted - log_z).exp().matrix();
  n.value.resize(1, 1);
  n.value(0, 0) = log_z - shifted(gold);
  return push(std::move(n));
}

Matrix& Graph::grad_slot(NodeId id) {
  Node& n = nodes_[id];
  if (n.param != nullptr) return n.param->grad;
  if (n.grad.size() == 0) {
    const Matrix& v = value(id);
    n.grad.setZero(v.rows(), v.cols());
  }
  return n.grad;
}

template <typename Expr>
void Graph::accumulate(NodeId id, const Expr& delta) {
  Node& n = nodes_[id];
  if (n.param == nullptr && n.grad.size() == 0) {
    n.grad = delta;
  } else {
    grad_slot(id) += delta;
  }
}

void Graph::backward(NodeId loss) {
  check_id(loss);
  if (backward_done_) throw ContractError("backward() already ran on this graph");
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + shape_string(lv));
  }
  backward_done_ = true;
  accumulate(loss, Matrix::Ones(1, 1));

  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.param != nullptr || n.grad.size() == 0) continue;
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::input:
      case Op::param:
        break;
      case Op::matmul: {
        const Matrix& va = value(n.a);
        const Matrix& vb = value(n.b);
        grad_slot(n.a).noalias() += g * vb.transpose();
        grad_slot(n.b).noalias() += va.transpose() * g;
        break;
      }
      case Op::add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::mul:
        accumulate(n.a, g.cwiseProduct(value(n.b)));
        accumulate(n.b, g.cwiseProduct(value(n.a)));
        break;
      case Op::tanh:
        accumulate(n.a, (g.array() * (1.0 - n.value.array().square())).matrix());
        break;
      case Op::sigmoid:
        accumulate(n.a, (g.array() * n.value.array() * (1.0 - n.value.array())).matrix());
        break;
      case Op::add_bias: {
        accumulate(n.a, g);
        const Matrix& vb = value(n.b);
        const Eigen::RowVectorXd sums = g.colwise().sum();
        if (vb.cols() == 1) {
          accumulate(n.b, Matrix(sums.transpose()));
        } else {
          accumulate(n.b, Matrix(sums));
        }
        break;
      }
      case Op::lookup:
        grad_slot(n.a).row(n.aux) += g.col(0).transpose();
        break;
      case Op::concat: {
        const Eigen::Index top = value(n.a).rows();
        accumulate(n.a, g.topRows(top));
        accumulate(n.b, g.bottomRows(g.rows() - top));
        break;
      }
      case Op::slice:
        grad_slot(n.a).middleRows(n.aux, g.rows()) += g;
        break;
      case Op::softmax_nll: {
        Matrix d = n.cache;
        d(n.aux, 0) -= 1.0;
        accumulate(n.a, g(0, 0) * d);
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ContractError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  Matrix mask(rows, cols);
  if (rate == 0.0) {
    mask.setOnes();
    return mask;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  }
  return mask;
}

Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

}  // namespace charprobe
