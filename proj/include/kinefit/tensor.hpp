#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kinefit {

using Shape = std::vector<int>;
using Storage = std::shared_ptr<std::vector<double>>;

long long numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Operation kinds recordable on a Tape.
enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  Sum,
  Mean,
  Sigmoid,
  Tanh,
  Relu,
  Sin,
  Cos,
  Square,
  Sqrt,
  Concat,
  Reshape,
  Broadcast,
  MinConst,
  MaxConst,
  Pow,
  Slice,
  MaxFilterDisc,
};

const char* op_name(Op op);

class Tape;

/// Dense array of 64-bit reals. A Tensor is either a plain constant
/// (node < 0) or a handle to a value recorded on a Tape, in which case
/// gradients can flow back to it through backward().
struct Tensor {
  Shape shape;
  Storage data;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;
  Tensor(Shape s, Storage d) : shape(std::move(s)), data(std::move(d)) {}

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> values);

  long long size() const { return numel(shape); }
  bool is_scalar() const { return size() == 1; }
  bool on_tape() const { return node >= 0; }

  const std::vector<double>& values() const { return *data; }
  double at(long long i) const { return (*data)[static_cast<size_t>(i)]; }
  /// Value of a scalar tensor.
  double value() const;
};

struct TapeNode {
  struct Arg {
    int node = -1;  // -1: constant input, value snapshot below
    Storage vals;
    Shape shape;
  };

  Op op = Op::Leaf;
  std::vector<Arg> args;
  Storage out;
  Shape out_shape;
  double attr = 0.0;      // constant for MinConst/MaxConst/Pow
  int p0 = 0, p1 = 0;     // Slice: start/len; MaxFilterDisc: radius
  std::vector<int> aux;   // MaxFilterDisc: argmax index per output cell
};

/// Append-only record of operations for one reverse-mode sweep.
/// Rebuilt for every optimization iteration (define-by-run); owned by a
/// single thread.
class Tape {
 public:
  /// Registers a differentiable input. Values are copied.
  Tensor leaf(Shape shape, std::vector<double> values);
  Tensor leaf(const Tensor& value);

  /// Evaluates `op` on `inputs` and records the result. Inputs may be
  /// constants or tensors previously recorded on this tape.
  Tensor record(Op op, std::span<const Tensor> inputs, const Shape& shape_attr = {},
                double attr = 0.0, int p0 = 0, int p1 = 0);

  const TapeNode& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  std::vector<TapeNode> nodes_;
};

/// Result of a backward sweep: node id -> gradient.
class Gradients {
 public:
  /// Gradient of the loss w.r.t. `t`. Zero tensor if no path reached it.
  Tensor at(const Tensor& t) const;
  bool reached(const Tensor& t) const;

 private:
  friend Gradients backward(const Tensor& loss);
  const Tape* tape_ = nullptr;
  std::vector<Storage> grads_;
};

/// Reverse-mode sweep from a scalar loss recorded on a tape. Seed
/// gradient is 1; gradients of fan-out nodes accumulate. Deterministic.
Gradients backward(const Tensor& loss);

// Elementwise binary ops allow equal shapes or scalar-vs-array broadcast.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// 2-D matrix product [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Pre-activations of sigmoid/tanh are clamped to [-30, 30]; the
// derivative is evaluated at the clamped value.
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
/// Concatenates flattened inputs into a 1-D tensor.
Tensor concat(std::span<const Tensor> parts);
Tensor reshape(const Tensor& a, Shape shape);
/// Expands a scalar to the given shape.
Tensor broadcast_to(const Tensor& a, Shape shape);
Tensor min_const(const Tensor& a, double c);
Tensor max_const(const Tensor& a, double c);
Tensor pow_const(const Tensor& a, double exponent);
/// 1-D window [start, start+len) of the flattened tensor.
Tensor slice(const Tensor& a, int start, int len);
/// Per-cell max over a disc of `radius` pixels; input must be 2-D.
Tensor maxfilter_disc(const Tensor& a, int radius);

}  // namespace kinefit
