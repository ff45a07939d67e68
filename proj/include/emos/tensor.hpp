#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace emos {

using Index = Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Shape = std::vector<Index>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Rank 0 is a scalar, rank 1 a vector.
///
/// `matrix()` views any tensor as a 2-D row-major block: rank 0 and 1 map to
/// a single row, higher ranks fold every trailing axis into the columns.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, Vector data);

  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(const Eigen::Ref<const Vector>& values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor matrix(const Eigen::Ref<const RowMatrix>& values);
  static Tensor full(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }
  Index rows() const;
  Index cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Eigen::Map<RowMatrix> matrix() { return {data_.data(), rows(), cols()}; }
  Eigen::Map<const RowMatrix> matrix() const { return {data_.data(), rows(), cols()}; }
  Vector& flat() { return data_; }
  const Vector& flat() const { return data_; }

  double& operator[](Index i) { return data_[i]; }
  double operator[](Index i) const { return data_[i]; }
  double item() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  Vector data_;
};

/// A named trainable array and its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v);
  void zero_grad();
};

class Tape;

/// Handle to a node recorded on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// View handed to a node's backward function.
class BackwardContext {
 public:
  BackwardContext(Tape& tape, std::size_t node) : tape_(tape), node_(node) {}

  const Tensor& grad_out() const;
  const Tensor& output() const;
  const Tensor& input(std::size_t i) const;
  bool needs(std::size_t i) const;
  /// Grad buffer of input i, zero-allocated on first use.
  Tensor& grad_in(std::size_t i);

 private:
  Tape& tape_;
  std::size_t node_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Records a computation in creation order, which is a topological order, so
/// reverse replay visits every node once after all of its consumers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is kept on the tape (see `grad`).
  Var variable(Tensor value);
  /// Leaf bound to a parameter; `backward` adds into `p.grad`. Registering
  /// the same parameter twice returns the same node. On a tape with grads
  /// disabled the parameter enters as a constant.
  Var parameter(Parameter& p);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op);

  /// Seeds d(root)/d(root) = 1 and replays the tape. `root` must be scalar.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of a variable after `backward`; zeros if it was unreachable.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  /// Number of recorded nodes tagged with `op`.
  std::size_t count(std::string_view op) const;

  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  friend class BackwardContext;
  friend class Var;

  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    std::string_view op;
  };

  Tensor& grad_buffer(std::size_t id);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_ids_;
  std::unordered_map<std::string_view, std::size_t> op_counts_;
  bool grad_enabled_ = true;
  bool replayed_ = false;
};

}  // namespace emos
