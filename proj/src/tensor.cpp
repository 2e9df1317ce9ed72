#include "kinefit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace kinefit {

long long numel(const Shape& shape) {
  long long n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::MatMul: return "matmul";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::Concat: return "concat";
    case Op::Reshape: return "reshape";
    case Op::Broadcast: return "broadcast";
    case Op::MinConst: return "min_const";
    case Op::MaxConst: return "max_const";
    case Op::Pow: return "pow";
    case Op::Slice: return "slice";
    case Op::MaxFilterDisc: return "maxfilter_disc";
  }
  return "?";
}

namespace {

Storage make_storage(size_t n) { return std::make_shared<std::vector<double>>(n); }

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_shape(Op op, const Tensor& t) {
  for (int d : t.shape)
    if (d <= 0) fail(std::string(op_name(op)) + ": invalid dimension in " + shape_str(t.shape));
  if (!t.data || t.data->size() != static_cast<size_t>(t.size()))
    fail(std::string(op_name(op)) + ": storage does not match shape " + shape_str(t.shape));
}

double clamp30(double z) { return z < -30.0 ? -30.0 : (z > 30.0 ? 30.0 : z); }

double sigmoid1(double z) { return 1.0 / (1.0 + std::exp(-clamp30(z))); }

// Elementwise binary evaluation with scalar broadcast on either side.
template <class F>
Tensor eval_binary(Op op, const Tensor& a, const Tensor& b, F f) {
  check_shape(op, a);
  check_shape(op, b);
  const bool a_scalar = a.is_scalar();
  const bool b_scalar = b.is_scalar();
  if (!a_scalar && !b_scalar && a.shape != b.shape)
    fail(std::string(op_name(op)) + ": shape mismatch " + shape_str(a.shape) + " vs " +
         shape_str(b.shape));
  const Tensor& big = (!a_scalar || b_scalar) ? a : b;
  auto out = make_storage(static_cast<size_t>(big.size()));
  const auto& av = *a.data;
  const auto& bv = *b.data;
  auto& ov = *out;
  const size_t n = ov.size();
  if (a_scalar && !b_scalar) {
    const double x = av[0];
    for (size_t i = 0; i < n; ++i) ov[i] = f(x, bv[i]);
  } else if (b_scalar && !a_scalar) {
    const double y = bv[0];
    for (size_t i = 0; i < n; ++i) ov[i] = f(av[i], y);
  } else {
    for (size_t i = 0; i < n; ++i) ov[i] = f(av[i], bv[i]);
  }
  return Tensor(big.shape, out);
}

template <class F>
Tensor eval_unary(Op op, const Tensor& a, F f) {
  check_shape(op, a);
  auto out = make_storage(static_cast<size_t>(a.size()));
  const auto& av = *a.data;
  auto& ov = *out;
  for (size_t i = 0; i < av.size(); ++i) ov[i] = f(av[i]);
  return Tensor(a.shape, out);
}

Tensor eval_matmul(const Tensor& a, const Tensor& b) {
  check_shape(Op::MatMul, a);
  check_shape(Op::MatMul, b);
  if (a.shape.size() != 2 || b.shape.size() != 2)
    fail("matmul: expects 2-D operands, got " + shape_str(a.shape) + " and " + shape_str(b.shape));
  const int m = a.shape[0], k = a.shape[1], k2 = b.shape[0], n = b.shape[1];
  if (k != k2)
    fail("matmul: inner dimensions differ, " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  auto out = make_storage(static_cast<size_t>(m) * n);
  const double* A = a.data->data();
  const double* B = b.data->data();
  double* C = out->data();
  for (int i = 0; i < m; ++i) {
    double* crow = C + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = A[static_cast<size_t>(i) * k + kk];
      if (aik == 0.0) continue;
      const double* brow = B + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return Tensor({m, n}, out);
}

Tensor eval_maxfilter(const Tensor& a, int radius) {
  check_shape(Op::MaxFilterDisc, a);
  if (a.shape.size() != 2) fail("maxfilter_disc: expects a 2-D tensor, got " + shape_str(a.shape));
  if (radius < 0) fail("maxfilter_disc: negative radius");
  const int h = a.shape[0], w = a.shape[1];
  auto out = make_storage(static_cast<size_t>(h) * w);
  const auto& in = *a.data;
  auto& ov = *out;
  // Offsets within the disc, fixed scan order for deterministic argmax.
  std::vector<std::pair<int, int>> offs;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dy * dy + dx * dx <= radius * radius) offs.emplace_back(dy, dx);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double best = -std::numeric_limits<double>::infinity();
      for (auto [dy, dx] : offs) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        const double v = in[static_cast<size_t>(yy) * w + xx];
        if (v > best) best = v;
      }
      ov[static_cast<size_t>(y) * w + x] = best;
    }
  }
  return Tensor({h, w}, out);
}

Tensor eval_op(Op op, std::span<const Tensor> in, const Shape& shape_attr, double attr, int p0,
               int p1) {
  switch (op) {
    case Op::Leaf:
      fail("leaf: not an evaluatable op");
    case Op::Add:
      return eval_binary(op, in[0], in[1], [](double x, double y) { return x + y; });
    case Op::Sub:
      return eval_binary(op, in[0], in[1], [](double x, double y) { return x - y; });
    case Op::Mul:
      return eval_binary(op, in[0], in[1], [](double x, double y) { return x * y; });
    case Op::Div:
      return eval_binary(op, in[0], in[1], [](double x, double y) { return x / y; });
    case Op::MatMul:
      return eval_matmul(in[0], in[1]);
    case Op::Sum: {
      check_shape(op, in[0]);
      double acc = 0;
      for (double v : *in[0].data) acc += v;
      return Tensor::scalar(acc);
    }
    case Op::Mean: {
      check_shape(op, in[0]);
      double acc = 0;
      for (double v : *in[0].data) acc += v;
      return Tensor::scalar(acc / static_cast<double>(in[0].size()));
    }
    case Op::Sigmoid:
      return eval_unary(op, in[0], [](double x) { return sigmoid1(x); });
    case Op::Tanh:
      return eval_unary(op, in[0], [](double x) { return std::tanh(clamp30(x)); });
    case Op::Relu:
      return eval_unary(op, in[0], [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::Sin:
      return eval_unary(op, in[0], [](double x) { return std::sin(x); });
    case Op::Cos:
      return eval_unary(op, in[0], [](double x) { return std::cos(x); });
    case Op::Square:
      return eval_unary(op, in[0], [](double x) { return x * x; });
    case Op::Sqrt:
      return eval_unary(op, in[0], [](double x) { return std::sqrt(x); });
    case Op::Concat: {
      if (in.empty()) fail("concat: needs at least one input");
      long long total = 0;
      for (const Tensor& t : in) {
        check_shape(op, t);
        total += t.size();
      }
      auto out = make_storage(static_cast<size_t>(total));
      size_t pos = 0;
      for (const Tensor& t : in) {
        std::copy(t.data->begin(), t.data->end(), out->begin() + pos);
        pos += t.data->size();
      }
      return Tensor({static_cast<int>(total)}, out);
    }
    case Op::Reshape: {
      check_shape(op, in[0]);
      if (numel(shape_attr) != in[0].size())
        fail("reshape: size mismatch " + shape_str(in[0].shape) + " -> " + shape_str(shape_attr));
      auto out = std::make_shared<std::vector<double>>(*in[0].data);
      return Tensor(shape_attr, out);
    }
    case Op::Broadcast: {
      check_shape(op, in[0]);
      if (!in[0].is_scalar()) fail("broadcast: input must be scalar, got " + shape_str(in[0].shape));
      auto out = make_storage(static_cast<size_t>(numel(shape_attr)));
      std::fill(out->begin(), out->end(), in[0].at(0));
      return Tensor(shape_attr, out);
    }
    case Op::MinConst:
      return eval_unary(op, in[0], [attr](double x) { return x < attr ? x : attr; });
    case Op::MaxConst:
      return eval_unary(op, in[0], [attr](double x) { return x > attr ? x : attr; });
    case Op::Pow:
      return eval_unary(op, in[0], [attr](double x) { return std::pow(x, attr); });
    case Op::Slice: {
      check_shape(op, in[0]);
      if (p0 < 0 || p1 <= 0 || p0 + p1 > in[0].size())
        fail("slice: range [" + std::to_string(p0) + "," + std::to_string(p0 + p1) +
             ") out of bounds for " + shape_str(in[0].shape));
      auto out = make_storage(static_cast<size_t>(p1));
      std::copy(in[0].data->begin() + p0, in[0].data->begin() + p0 + p1, out->begin());
      return Tensor({p1}, out);
    }
    case Op::MaxFilterDisc:
      return eval_maxfilter(in[0], p0);
  }
  fail("unknown op");
}

size_t expected_arity(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::MatMul:
      return 2;
    case Op::Concat:
      return 0;  // variadic
    default:
      return 1;
  }
}

}  // namespace

Tensor Tensor::scalar(double v) {
  return Tensor({1}, std::make_shared<std::vector<double>>(1, v));
}

Tensor Tensor::zeros(Shape shape) {
  auto n = numel(shape);
  return Tensor(std::move(shape), make_storage(static_cast<size_t>(n)));
}

Tensor Tensor::full(Shape shape, double v) {
  auto n = numel(shape);
  return Tensor(std::move(shape), std::make_shared<std::vector<double>>(static_cast<size_t>(n), v));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (numel(shape) != static_cast<long long>(values.size()))
    fail("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
  return Tensor(std::move(shape), std::make_shared<std::vector<double>>(std::move(values)));
}

double Tensor::value() const {
  if (!is_scalar()) fail("value: tensor " + shape_str(shape) + " is not scalar");
  return (*data)[0];
}

Tensor Tape::leaf(Shape shape, std::vector<double> values) {
  return leaf(Tensor::from(std::move(shape), std::move(values)));
}

Tensor Tape::leaf(const Tensor& value) {
  check_shape(Op::Leaf, value);
  TapeNode n;
  n.op = Op::Leaf;
  n.out = std::make_shared<std::vector<double>>(*value.data);
  n.out_shape = value.shape;
  nodes_.push_back(std::move(n));
  Tensor t(value.shape, nodes_.back().out);
  t.tape = this;
  t.node = static_cast<int>(nodes_.size()) - 1;
  return t;
}

Tensor Tape::record(Op op, std::span<const Tensor> inputs, const Shape& shape_attr, double attr,
                    int p0, int p1) {
  const size_t arity = expected_arity(op);
  if (arity != 0 && inputs.size() != arity)
    fail(std::string(op_name(op)) + ": expects " + std::to_string(arity) + " inputs, got " +
         std::to_string(inputs.size()));
  for (const Tensor& t : inputs)
    if (t.tape && t.tape != this) fail(std::string(op_name(op)) + ": input from another tape");

  Tensor out = eval_op(op, inputs, shape_attr, attr, p0, p1);

  TapeNode n;
  n.op = op;
  n.args.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    TapeNode::Arg a;
    a.node = (t.tape == this) ? t.node : -1;
    a.vals = t.data;
    a.shape = t.shape;
    n.args.push_back(std::move(a));
  }
  n.out = out.data;
  n.out_shape = out.shape;
  n.attr = attr;
  n.p0 = p0;
  n.p1 = p1;
  if (op == Op::MaxFilterDisc) {
    // Save argmax indices so backward routes gradient without a rescan.
    const int h = inputs[0].shape[0], w = inputs[0].shape[1];
    const int radius = p0;
    n.aux.resize(static_cast<size_t>(h) * w);
    const auto& in = *inputs[0].data;
    std::vector<std::pair<int, int>> offs;
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        if (dy * dy + dx * dx <= radius * radius) offs.emplace_back(dy, dx);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        int best_idx = -1;
        for (auto [dy, dx] : offs) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const int idx = yy * w + xx;
          if (in[static_cast<size_t>(idx)] > best) {
            best = in[static_cast<size_t>(idx)];
            best_idx = idx;
          }
        }
        n.aux[static_cast<size_t>(y) * w + x] = best_idx;
      }
    }
  }
  nodes_.push_back(std::move(n));
  out.tape = this;
  out.node = static_cast<int>(nodes_.size()) - 1;
  return out;
}

namespace {

// Accumulates `g` into the gradient slot of input `arg`, reducing over the
// broadcast if the input was scalar while the output was not.
void accum_binary(std::vector<Storage>& grads, const TapeNode::Arg& arg,
                  const std::vector<double>& g, const std::vector<double>* factor,
                  bool negate = false) {
  if (arg.node < 0) return;
  auto& slot = grads[static_cast<size_t>(arg.node)];
  if (!slot) slot = make_storage(static_cast<size_t>(numel(arg.shape)));
  auto& gv = *slot;
  const bool scalar_in = numel(arg.shape) == 1 && g.size() > 1;
  if (scalar_in) {
    double acc = 0;
    for (size_t i = 0; i < g.size(); ++i) {
      double t = factor ? g[i] * (*factor)[i] : g[i];
      acc += t;
    }
    gv[0] += negate ? -acc : acc;
  } else {
    for (size_t i = 0; i < g.size(); ++i) {
      double t = factor ? g[i] * (factor->size() == 1 ? (*factor)[0] : (*factor)[i]) : g[i];
      gv[i] += negate ? -t : t;
    }
  }
}

void accum_values(std::vector<Storage>& grads, const TapeNode::Arg& arg,
                  const std::vector<double>& contrib) {
  if (arg.node < 0) return;
  auto& slot = grads[static_cast<size_t>(arg.node)];
  if (!slot) slot = make_storage(static_cast<size_t>(numel(arg.shape)));
  auto& gv = *slot;
  for (size_t i = 0; i < contrib.size(); ++i) gv[i] += contrib[i];
}

// Pointwise chain rule: contrib[i] = g[broadcast(i)] * local[i] over the
// input's element count.
void accum_pointwise(std::vector<Storage>& grads, const TapeNode::Arg& arg,
                     const std::vector<double>& g, const std::vector<double>& local) {
  if (arg.node < 0) return;
  auto& slot = grads[static_cast<size_t>(arg.node)];
  if (!slot) slot = make_storage(static_cast<size_t>(numel(arg.shape)));
  auto& gv = *slot;
  const size_t n_in = gv.size();
  if (n_in == 1 && g.size() > 1) {
    double acc = 0;
    for (size_t i = 0; i < g.size(); ++i) acc += g[i] * local[i];
    gv[0] += acc;
  } else {
    for (size_t i = 0; i < n_in; ++i) gv[i] += (g.size() == 1 ? g[0] : g[i]) * local[i];
  }
}

}  // namespace

Gradients backward(const Tensor& loss) {
  if (!loss.tape || loss.node < 0) fail("backward: loss is not recorded on a tape");
  if (!loss.is_scalar()) fail("backward: loss must be scalar, got " + shape_str(loss.shape));
  const Tape& tape = *loss.tape;

  Gradients result;
  result.tape_ = &tape;
  result.grads_.assign(static_cast<size_t>(tape.size()), nullptr);
  result.grads_[static_cast<size_t>(loss.node)] = std::make_shared<std::vector<double>>(1, 1.0);

  for (int id = loss.node; id >= 0; --id) {
    const Storage& gs = result.grads_[static_cast<size_t>(id)];
    if (!gs) continue;
    const TapeNode& n = tape.node(id);
    const std::vector<double>& g = *gs;
    auto& grads = result.grads_;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        accum_binary(grads, n.args[0], g, nullptr);
        accum_binary(grads, n.args[1], g, nullptr);
        break;
      case Op::Sub:
        accum_binary(grads, n.args[0], g, nullptr);
        accum_binary(grads, n.args[1], g, nullptr, /*negate=*/true);
        break;
      case Op::Mul:
        accum_binary(grads, n.args[0], g, n.args[1].vals.get());
        accum_binary(grads, n.args[1], g, n.args[0].vals.get());
        break;
      case Op::Div: {
        const auto& av = *n.args[0].vals;
        const auto& bv = *n.args[1].vals;
        if (n.args[0].node >= 0) {
          std::vector<double> inv(g.size());
          for (size_t i = 0; i < g.size(); ++i) inv[i] = 1.0 / (bv.size() == 1 ? bv[0] : bv[i]);
          accum_binary(grads, n.args[0], g, &inv);
        }
        if (n.args[1].node >= 0) {
          std::vector<double> d(g.size());
          for (size_t i = 0; i < g.size(); ++i) {
            const double a = av.size() == 1 ? av[0] : av[i];
            const double b = bv.size() == 1 ? bv[0] : bv[i];
            d[i] = -a / (b * b);
          }
          accum_binary(grads, n.args[1], g, &d);
        }
        break;
      }
      case Op::MatMul: {
        const int m = n.args[0].shape[0], k = n.args[0].shape[1], nn = n.args[1].shape[1];
        const auto& A = *n.args[0].vals;
        const auto& B = *n.args[1].vals;
        if (n.args[0].node >= 0) {
          // dA = g . B^T
          std::vector<double> da(static_cast<size_t>(m) * k, 0.0);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < nn; ++j) {
              const double gij = g[static_cast<size_t>(i) * nn + j];
              if (gij == 0.0) continue;
              for (int kk = 0; kk < k; ++kk)
                da[static_cast<size_t>(i) * k + kk] += gij * B[static_cast<size_t>(kk) * nn + j];
            }
          accum_values(grads, n.args[0], da);
        }
        if (n.args[1].node >= 0) {
          // dB = A^T . g
          std::vector<double> db(static_cast<size_t>(k) * nn, 0.0);
          for (int i = 0; i < m; ++i)
            for (int kk = 0; kk < k; ++kk) {
              const double aik = A[static_cast<size_t>(i) * k + kk];
              if (aik == 0.0) continue;
              for (int j = 0; j < nn; ++j)
                db[static_cast<size_t>(kk) * nn + j] += aik * g[static_cast<size_t>(i) * nn + j];
            }
          accum_values(grads, n.args[1], db);
        }
        break;
      }
      case Op::Sum: {
        if (n.args[0].node < 0) break;
        std::vector<double> contrib(static_cast<size_t>(numel(n.args[0].shape)), g[0]);
        accum_values(grads, n.args[0], contrib);
        break;
      }
      case Op::Mean: {
        if (n.args[0].node < 0) break;
        const size_t cnt = static_cast<size_t>(numel(n.args[0].shape));
        std::vector<double> contrib(cnt, g[0] / static_cast<double>(cnt));
        accum_values(grads, n.args[0], contrib);
        break;
      }
      case Op::Sigmoid: {
        const auto& out = *n.out;
        std::vector<double> local(out.size());
        for (size_t i = 0; i < out.size(); ++i) local[i] = out[i] * (1.0 - out[i]);
        accum_pointwise(grads, n.args[0], g, local);
        break;
      }
      case Op::Tanh: {
        const auto& out = *n.out;
        std::vector<double> local(out.size());
        for (size_t i = 0; i < out.size(); ++i) local[i] = 1.0 - out[i] * out[i];
        accum_pointwise(grads, n.args[0], g, local);
        break;
      }
      case Op::Relu: {
        const auto& in = *n.args[0].vals;
        std::vector<double> local(in.size());
        for (size_t i = 0; i < in.size(); ++i) local[i] = in[i] > 0.0 ? 1.0 : 0.0;
        accum_pointwise(grads, n.args[0], g, local);
        break;
      }
      case Op::Sin: {
        const auto& in = *n.args[0].vals;
        std::vector<double> local(in.size());
        for (size_t i = 0; i < in.size(); ++i) local[i] = std::cos(in[i]);
        accum_pointwise(grads, n.args[0], g, local);
        break;
      }
      case Op::Cos: {
        const auto& in = *n.args[0].vals;
        std::vector<double> local(in.size());
        for (size_t i = 0; i < in.size(); ++i) local[i] = -std::sin(in[i]);
        accum_pointwise(grads, n.args[0], g, local);
        break;
      }
      case Op::Square: {
        const auto& in = *n.args[0].vals;
        std::vector<double> local(in.size());
        for (size_t i = 0; i < in.size(); ++i) local[i] = 2.0 * in[i];
        accum_pointwise(grads, n.args[0], g, local);
        break;
      }
      case Op::Sqrt: {
        const auto& out = *n.out;
        std::vector<double> local(out.size());
        for (size_t i = 0; i < out.size(); ++i) local[i] = 0.5 / out[i];
        accum_pointwise(grads, n.args[0], g, local);
        break;
      }
      case Op::Concat: {
        size_t pos = 0;
        for (const auto& arg : n.args) {
          const size_t cnt = static_cast<size_t>(numel(arg.shape));
          if (arg.node >= 0) {
            std::vector<double> contrib(g.begin() + pos, g.begin() + pos + cnt);
            accum_values(grads, arg, contrib);
          }
          pos += cnt;
        }
        break;
      }
      case Op::Reshape:
        if (n.args[0].node >= 0) accum_values(grads, n.args[0], g);
        break;
      case Op::Broadcast: {
        if (n.args[0].node < 0) break;
        double acc = 0;
        for (double v : g) acc += v;
        accum_values(grads, n.args[0], std::vector<double>{acc});
        break;
      }
      case Op::MinConst: {
        const auto& in = *n.args[0].vals;
        std::vector<double> local(in.size());
        for (size_t i = 0; i < in.size(); ++i) local[i] = in[i] <= n.attr ? 1.0 : 0.0;
        accum_pointwise(grads, n.args[0], g, local);
        break;
      }
      case Op::MaxConst: {
        const auto& in = *n.args[0].vals;
        std::vector<double> local(in.size());
        for (size_t i = 0; i < in.size(); ++i) local[i] = in[i] >= n.attr ? 1.0 : 0.0;
        accum_pointwise(grads, n.args[0], g, local);
        break;
      }
      case Op::Pow: {
        const auto& in = *n.args[0].vals;
        std::vector<double> local(in.size());
        for (size_t i = 0; i < in.size(); ++i)
          local[i] = n.attr * std::pow(in[i], n.attr - 1.0);
        accum_pointwise(grads, n.args[0], g, local);
        break;
      }
      case Op::Slice: {
        if (n.args[0].node < 0) break;
        std::vector<double> contrib(static_cast<size_t>(numel(n.args[0].shape)), 0.0);
        for (int i = 0; i < n.p1; ++i) contrib[static_cast<size_t>(n.p0 + i)] = g[static_cast<size_t>(i)];
        accum_values(grads, n.args[0], contrib);
        break;
      }
      case Op::MaxFilterDisc: {
        if (n.args[0].node < 0) break;
        std::vector<double> contrib(static_cast<size_t>(numel(n.args[0].shape)), 0.0);
        for (size_t i = 0; i < n.aux.size(); ++i) contrib[static_cast<size_t>(n.aux[i])] += g[i];
        accum_values(grads, n.args[0], contrib);
        break;
      }
    }
  }
  return result;
}

Tensor Gradients::at(const Tensor& t) const {
  if (!t.tape || t.node < 0) fail("gradients: tensor is not on a tape");
  if (t.tape->size() <= t.node || t.tape != tape_)
    fail("gradients: tensor from a different tape");
  const Storage& g = grads_[static_cast<size_t>(t.node)];
  if (!g) return Tensor::zeros(t.shape);
  return Tensor(t.shape, g);
}

bool Gradients::reached(const Tensor& t) const {
  return t.tape == tape_ && t.node >= 0 && grads_[static_cast<size_t>(t.node)] != nullptr;
}

namespace {

// Records on the operands' tape, or evaluates eagerly if all are constants.
Tensor apply(Op op, std::span<const Tensor> inputs, const Shape& shape_attr = {}, double attr = 0.0,
             int p0 = 0, int p1 = 0) {
  Tape* tape = nullptr;
  for (const Tensor& t : inputs) {
    if (!t.tape) continue;
    if (tape && tape != t.tape) fail(std::string(op_name(op)) + ": inputs from different tapes");
    tape = t.tape;
  }
  if (tape) return tape->record(op, inputs, shape_attr, attr, p0, p1);
  return eval_op(op, inputs, shape_attr, attr, p0, p1);
}

}  // namespace

namespace {
Tensor apply2(Op op, const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply(op, in);
}
Tensor apply1(Op op, const Tensor& a, const Shape& shape_attr = {}, double attr = 0.0, int p0 = 0,
              int p1 = 0) {
  const Tensor in[] = {a};
  return apply(op, in, shape_attr, attr, p0, p1);
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return apply2(Op::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply2(Op::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply2(Op::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return apply2(Op::Div, a, b); }
Tensor matmul(const Tensor& a, const Tensor& b) { return apply2(Op::MatMul, a, b); }
Tensor sum(const Tensor& a) { return apply1(Op::Sum, a); }
Tensor mean(const Tensor& a) { return apply1(Op::Mean, a); }
Tensor sigmoid(const Tensor& a) { return apply1(Op::Sigmoid, a); }
Tensor tanh(const Tensor& a) { return apply1(Op::Tanh, a); }
Tensor relu(const Tensor& a) { return apply1(Op::Relu, a); }
Tensor sin(const Tensor& a) { return apply1(Op::Sin, a); }
Tensor cos(const Tensor& a) { return apply1(Op::Cos, a); }
Tensor square(const Tensor& a) { return apply1(Op::Square, a); }
Tensor sqrt(const Tensor& a) { return apply1(Op::Sqrt, a); }
Tensor concat(std::span<const Tensor> parts) { return apply(Op::Concat, parts); }
Tensor reshape(const Tensor& a, Shape shape) { return apply1(Op::Reshape, a, shape); }
Tensor broadcast_to(const Tensor& a, Shape shape) { return apply1(Op::Broadcast, a, shape); }
Tensor min_const(const Tensor& a, double c) { return apply1(Op::MinConst, a, {}, c); }
Tensor max_const(const Tensor& a, double c) { return apply1(Op::MaxConst, a, {}, c); }
Tensor pow_const(const Tensor& a, double exponent) { return apply1(Op::Pow, a, {}, exponent); }
Tensor slice(const Tensor& a, int start, int len) {
  return apply1(Op::Slice, a, {}, 0.0, start, len);
}
Tensor maxfilter_disc(const Tensor& a, int radius) {
  return apply1(Op::MaxFilterDisc, a, {}, 0.0, radius, 0);
}

}  // namespace kinefit
