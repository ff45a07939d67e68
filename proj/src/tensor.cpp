#include "emos/tensor.hpp"

#include "emos/errors.hpp"

#include <numeric>
#include <sstream>

namespace emos {

namespace {

Index product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(Vector::Zero(product(shape_))) {
  for (Index d : shape_) {
    if (d < 0) throw DimensionError("negative dimension in " + shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

Tensor Tensor::scalar(double value) {
  Tensor t(Shape{});
  t.data_[0] = value;
  return t;
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v[i++] = x;
  return {Shape{v.size()}, std::move(v)};
}

Tensor Tensor::vector(const Eigen::Ref<const Vector>& values) {
  return {Shape{values.size()}, Vector(values)};
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const auto n = static_cast<Index>(rows.size());
  const auto m = n ? static_cast<Index>(rows.begin()->size()) : 0;
  Tensor t(Shape{n, m});
  Index r = 0;
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != m) throw DimensionError("ragged matrix literal");
    Index c = 0;
    for (double x : row) t.data_[r * m + c++] = x;
    ++r;
  }
  return t;
}

Tensor Tensor::matrix(const Eigen::Ref<const RowMatrix>& values) {
  Tensor t(Shape{values.rows(), values.cols()});
  t.matrix() = values;
  return t;
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.data_.setConstant(value);
  return t;
}

Index Tensor::rows() const { return shape_.size() < 2 ? 1 : shape_[0]; }

Index Tensor::cols() const {
  if (shape_.size() < 2) return data_.size();
  return shape_[0] == 0 ? 0 : data_.size() / shape_[0];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ArgumentError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (product(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return {std::move(shape), data_};
}

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  grad.flat().setZero();
}

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->nodes_[id_].requires_grad; }

const Tensor& BackwardContext::grad_out() const { return tape_.nodes_[node_].grad; }

const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value; }

const Tensor& BackwardContext::input(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs[i]].value;
}

bool BackwardContext::needs(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs[i]].requires_grad;
}

Tensor& BackwardContext::grad_in(std::size_t i) {
  return tape_.grad_buffer(tape_.nodes_[node_].inputs[i]);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.op = "constant";
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = grad_enabled_;
  node.op = "variable";
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return {this, it->second};
  Node node;
  node.value = p.value;
  node.requires_grad = grad_enabled_;
  node.param = grad_enabled_ ? &p : nullptr;
  node.op = "parameter";
  nodes_.push_back(std::move(node));
  param_ids_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op) {
  Node node;
  node.value = std::move(value);
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw ArgumentError("input recorded on a different tape");
    node.inputs.push_back(v.id());
    node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
  }
  node.requires_grad = node.requires_grad && grad_enabled_;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  ++op_counts_[op];
  return {this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw ArgumentError("backward root recorded on a different tape");
  if (root.value().size() != 1) {
    throw ArgumentError("backward root must be scalar, got " + shape_string(root.shape()));
  }
  if (replayed_) throw ArgumentError("tape already replayed");
  replayed_ = true;
  grad_buffer(root.id()).flat().setConstant(1.0);
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.has_grad || !node.requires_grad) continue;
    if (node.backward) {
      BackwardContext ctx(*this, id);
      node.backward(ctx);
    }
    if (node.param) node.param->grad.flat() += node.grad.flat();
  }
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_[v.id()];
  return node.has_grad ? node.grad : Tensor(node.value.shape());
}

std::size_t Tape::count(std::string_view op) const {
  auto it = op_counts_.find(op);
  return it == op_counts_.end() ? 0 : it->second;
}

}  // namespace emos
