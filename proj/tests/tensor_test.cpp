#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "kinefit/gradcheck.hpp"
#include "kinefit/rng.hpp"
#include "kinefit/tensor.hpp"

using namespace kinefit;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(static_cast<size_t>(numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("elementwise forward values") {
  Tensor a = Tensor::from({2}, {1, 2});
  Tensor b = Tensor::from({2}, {3, 4});
  Tensor c = add(a, b);
  CHECK(c.at(0) == 4.0);
  CHECK(c.at(1) == 6.0);

  CHECK(sub(b, a).at(1) == 2.0);
  CHECK(mul(a, b).at(1) == 8.0);
  CHECK(div(b, a).at(1) == 2.0);
  CHECK(sigmoid(Tensor::scalar(0.0)).value() == 0.5);
  CHECK(relu(Tensor::scalar(-1.5)).value() == 0.0);
  CHECK(relu(Tensor::scalar(2.5)).value() == 2.5);
  CHECK(square(Tensor::scalar(-3.0)).value() == 9.0);
  CHECK(sqrt(Tensor::scalar(16.0)).value() == 4.0);
  CHECK(pow_const(Tensor::scalar(2.0), 3.0).value() == 8.0);
  CHECK(min_const(Tensor::scalar(5.0), 2.0).value() == 2.0);
  CHECK(max_const(Tensor::scalar(-5.0), 0.0).value() == 0.0);
}

TEST_CASE("scalar broadcast in binary ops") {
  Tensor a = Tensor::from({3}, {1, 2, 3});
  Tensor s = Tensor::scalar(10.0);
  Tensor r = mul(a, s);
  CHECK(r.shape == Shape{3});
  CHECK(r.at(2) == 30.0);
  Tensor l = sub(s, a);
  CHECK(l.at(0) == 9.0);
}

TEST_CASE("matmul against identity and by hand") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {5, 6, 7, 8});
  Tensor r = matmul(eye, m);
  CHECK(std::memcmp(r.data->data(), m.data->data(), 4 * sizeof(double)) == 0);

  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = matmul(a, b);
  CHECK(c.shape == Shape{2, 2});
  CHECK(c.at(0) == doctest::Approx(58));
  CHECK(c.at(1) == doctest::Approx(64));
  CHECK(c.at(2) == doctest::Approx(139));
  CHECK(c.at(3) == doctest::Approx(154));
}

TEST_CASE("reductions, reshape, concat, slice, broadcast") {
  Tensor a = Tensor::from({4}, {1, 2, 3, 4});
  CHECK(sum(a).value() == 10.0);
  CHECK(mean(a).value() == 2.5);

  Tensor r = reshape(a, {2, 2});
  CHECK(r.shape == Shape{2, 2});
  CHECK(r.at(3) == 4.0);

  Tensor parts[] = {Tensor::from({2}, {1, 2}), Tensor::scalar(9)};
  Tensor cc = concat(parts);
  CHECK(cc.shape == Shape{3});
  CHECK(cc.at(2) == 9.0);

  Tensor sl = slice(a, 1, 2);
  CHECK(sl.shape == Shape{2});
  CHECK(sl.at(0) == 2.0);
  CHECK(sl.at(1) == 3.0);

  Tensor bc = broadcast_to(Tensor::scalar(7), {2, 3});
  CHECK(bc.size() == 6);
  CHECK(bc.at(5) == 7.0);
}

TEST_CASE("maxfilter_disc forward by brute force") {
  Rng rng(11);
  const int h = 9, w = 7;
  Tensor img = random_tensor({h, w}, rng, 0.0, 1.0);
  for (int radius : {0, 1, 2, 3}) {
    Tensor out = maxfilter_disc(img, radius);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double best = -1e300;
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx)
            if ((yy - y) * (yy - y) + (xx - x) * (xx - x) <= radius * radius)
              best = std::max(best, img.at(yy * w + xx));
        CHECK(out.at(y * w + x) == best);
      }
    }
  }
}

TEST_CASE("saturated activations stay finite and inside bounds") {
  Tensor big = Tensor::from({2}, {1e9, -1e9});
  Tensor s = sigmoid(big);
  CHECK(s.at(0) < 1.0);
  CHECK(s.at(0) > 0.99);
  CHECK(s.at(1) > 0.0);
  CHECK(s.at(1) < 1e-10);
  Tensor t = tanh(big);
  CHECK(std::isfinite(t.at(0)));
  CHECK(t.at(0) == doctest::Approx(1.0));
}

TEST_CASE("backward of square at x=3 gives 6") {
  Tape tape;
  Tensor x = tape.leaf({1}, {3.0});
  Tensor loss = square(x);
  Tensor g = backward(loss).at(x);
  CHECK(g.value() == 6.0);
}

TEST_CASE("backward of sum of squares matches central differences") {
  // Oracle: f(x) = sum(x^2), gradient checked against numeric differences
  // rather than the analytic 2x formula.
  Tensor point = Tensor::from({2}, {1.0, -2.0});
  auto f = [](Tape&, const Tensor& x) { return sum(square(x)); };
  CHECK(finite_diff_check(f, point, 1e-5) < 1e-7);

  Tape tape;
  Tensor x = tape.leaf(point);
  Tensor g = backward(sum(square(x))).at(x);
  CHECK(g.at(0) == doctest::Approx(2.0));
  CHECK(g.at(1) == doctest::Approx(-4.0));
}

TEST_CASE("loss independent of a leaf leaves its gradient zero") {
  Tape tape;
  Tensor x = tape.leaf({2}, {1.0, 2.0});
  Tensor y = tape.leaf({1}, {5.0});
  Tensor loss = sum(square(y));
  Gradients g = backward(loss);
  CHECK_FALSE(g.reached(x));
  Tensor gx = g.at(x);
  CHECK(gx.at(0) == 0.0);
  CHECK(gx.at(1) == 0.0);
}

TEST_CASE("multiplying by zero kills the gradient numerically") {
  Tape tape;
  Tensor x = tape.leaf({3}, {1.0, 2.0, 3.0});
  Tensor loss = mul(sum(x), Tensor::scalar(0.0));
  Tensor g = backward(loss).at(x);
  for (int i = 0; i < 3; ++i) CHECK(g.at(i) == 0.0);
}

TEST_CASE("fan-out gradients accumulate over both paths") {
  // y = x*x + x; dy/dx = 2x + 1. Compare against the two single-path
  // tapes to confirm the accumulation is exactly the sum.
  const double x0 = 1.7;
  Tape tape;
  Tensor x = tape.leaf({1}, {x0});
  Tensor y = add(mul(x, x), x);
  const double total = backward(y).at(x).value();

  Tape t1;
  Tensor x1 = t1.leaf({1}, {x0});
  const double product_path = backward(mul(x1, x1)).at(x1).value();
  const double identity_path = 1.0;
  CHECK(total == doctest::Approx(product_path + identity_path));
  CHECK(total == doctest::Approx(2.0 * x0 + 1.0));
}

TEST_CASE("backward twice over one tape is bit-identical") {
  Rng rng(3);
  Tape tape;
  Tensor x = tape.leaf(random_tensor({4, 4}, rng));
  Tensor w = tape.leaf(random_tensor({4, 4}, rng));
  Tensor loss = mean(square(tanh(matmul(w, x))));
  Tensor g1 = backward(loss).at(x);
  Tensor g2 = backward(loss).at(x);
  CHECK(std::memcmp(g1.data->data(), g2.data->data(), sizeof(double) * 16) == 0);
}

TEST_CASE("rebuilding the same graph twice is bit-identical") {
  Rng rng(4);
  Tensor px = random_tensor({5, 5}, rng);
  Tensor pw = random_tensor({5, 5}, rng);
  std::vector<double> run[2];
  for (int r = 0; r < 2; ++r) {
    Tape tape;
    Tensor x = tape.leaf(px);
    Tensor w = tape.leaf(pw);
    Tensor loss = mean(sigmoid(matmul(w, square(x))));
    run[r] = backward(loss).at(w).values();
  }
  CHECK(std::memcmp(run[0].data(), run[1].data(), sizeof(double) * 25) == 0);
}

TEST_CASE("shape mismatch errors name the op and shapes") {
  Tensor a = Tensor::from({2}, {1, 2});
  Tensor b = Tensor::from({3}, {1, 2, 3});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), std::invalid_argument);
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor n = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_WITH_AS(matmul(m, n), doctest::Contains("matmul"), std::invalid_argument);
  CHECK_THROWS_AS(reshape(a, {4}), std::invalid_argument);
  CHECK_THROWS_AS(slice(a, 1, 5), std::invalid_argument);
}

TEST_CASE("non-scalar loss is rejected") {
  Tape tape;
  Tensor x = tape.leaf({2}, {1.0, 2.0});
  Tensor y = square(x);
  CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("backward requires a recorded loss") {
  Tensor c = Tensor::scalar(1.0);
  CHECK_THROWS_AS(backward(c), std::invalid_argument);
}

TEST_CASE("mixing tensors from two tapes is rejected") {
  Tape t1, t2;
  Tensor a = t1.leaf({1}, {1.0});
  Tensor b = t2.leaf({1}, {2.0});
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("finite difference agreement for every op kind") {
  Rng rng(17);
  const double eps = 1e-5;
  const double tol = 1e-4;

  auto check = [&](const char* name, const ScalarFn& f, const Tensor& point) {
    const double err = finite_diff_check(f, point, eps);
    INFO(name);
    CHECK(err < tol);
  };

  Tensor v = random_tensor({6}, rng);
  Tensor v_pos = random_tensor({6}, rng, 0.5, 2.0);
  Tensor other = random_tensor({6}, rng);
  Tensor sc = Tensor::scalar(rng.uniform(0.5, 1.5));

  check("add", [&](Tape&, const Tensor& x) { return sum(add(x, other)); }, v);
  check("sub", [&](Tape&, const Tensor& x) { return sum(sub(other, x)); }, v);
  check("mul", [&](Tape&, const Tensor& x) { return sum(mul(x, other)); }, v);
  check("mul_scalar", [&](Tape&, const Tensor& x) { return sum(mul(sc, x)); }, v);
  check("div", [&](Tape&, const Tensor& x) { return sum(div(other, x)); }, v_pos);
  check("div_num", [&](Tape&, const Tensor& x) { return sum(div(x, v_pos)); }, v);
  check("sum", [&](Tape&, const Tensor& x) { return sum(x); }, v);
  check("mean", [&](Tape&, const Tensor& x) { return mean(x); }, v);
  check("sigmoid", [&](Tape&, const Tensor& x) { return sum(sigmoid(x)); }, v);
  check("tanh", [&](Tape&, const Tensor& x) { return sum(tanh(x)); }, v);
  check("sin", [&](Tape&, const Tensor& x) { return sum(sin(x)); }, v);
  check("cos", [&](Tape&, const Tensor& x) { return sum(cos(x)); }, v);
  check("square", [&](Tape&, const Tensor& x) { return sum(square(x)); }, v);
  check("sqrt", [&](Tape&, const Tensor& x) { return sum(sqrt(x)); }, v_pos);
  check("pow", [&](Tape&, const Tensor& x) { return sum(pow_const(x, 2.5)); }, v_pos);
  check("reshape", [&](Tape&, const Tensor& x) { return sum(square(reshape(x, {2, 3}))); }, v);
  check("slice", [&](Tape&, const Tensor& x) { return sum(square(slice(x, 1, 3))); }, v);
  check("broadcast",
        [&](Tape&, const Tensor& x) { return sum(mul(broadcast_to(x, {6}), other)); },
        Tensor::scalar(0.7));
  check("concat",
        [&](Tape&, const Tensor& x) {
          Tensor parts[] = {x, other};
          return sum(square(concat(parts)));
        },
        v);

  // Kinked ops: keep the evaluation point away from the kink so the
  // central difference is valid.
  Tensor away = Tensor::from({4}, {-1.2, -0.4, 0.6, 1.9});
  check("relu", [&](Tape&, const Tensor& x) { return sum(relu(x)); }, away);
  check("min_const", [&](Tape&, const Tensor& x) { return sum(min_const(x, 0.1)); }, away);
  check("max_const", [&](Tape&, const Tensor& x) { return sum(max_const(x, 0.1)); }, away);

  check("matmul_lhs",
        [&](Tape&, const Tensor& x) {
          Tensor m = reshape(x, {2, 3});
          Tensor w = Tensor::from({3, 2}, {0.3, -0.7, 1.1, 0.2, -0.5, 0.9});
          return sum(square(matmul(m, w)));
        },
        v);
  check("matmul_rhs",
        [&](Tape&, const Tensor& x) {
          Tensor m = Tensor::from({2, 3}, {0.3, -0.7, 1.1, 0.2, -0.5, 0.9});
          return sum(square(matmul(m, reshape(x, {3, 2}))));
        },
        v);

  // Max filter: random entries are distinct with margin far above eps, so
  // the argmax is stable under the perturbation.
  check("maxfilter_disc",
        [&](Tape&, const Tensor& x) { return sum(square(maxfilter_disc(reshape(x, {4, 5}), 1))); },
        random_tensor({20}, rng, 0.0, 1.0));
}

TEST_CASE("finite difference agreement for a composite chain") {
  Rng rng(23);
  Tensor w1 = random_tensor({4, 3}, rng, -0.8, 0.8);
  Tensor w2 = random_tensor({1, 4}, rng, -0.8, 0.8);
  auto f = [&](Tape&, const Tensor& x) {
    Tensor h = tanh(matmul(w1, reshape(x, {3, 1})));
    Tensor o = sigmoid(matmul(w2, h));
    return mean(square(o));
  };
  CHECK(finite_diff_check(f, random_tensor({3}, rng), 1e-4) < 1e-3);
}

TEST_CASE("finite_diff_check flags non-finite values with the coordinate") {
  // sqrt goes NaN when the negative perturbation crosses zero.
  auto f = [](Tape&, const Tensor& x) { return sum(sqrt(x)); };
  Tensor point = Tensor::from({2}, {1.0, 1e-6});
  CHECK_THROWS_WITH_AS(finite_diff_check(f, point, 1e-5), doctest::Contains("coordinate 1"),
                       std::runtime_error);
}

TEST_CASE("gradient of constant-only subgraphs does not leak") {
  Tape tape;
  Tensor x = tape.leaf({2}, {1.0, 2.0});
  Tensor c = Tensor::from({2}, {5.0, 5.0});
  Tensor loss = sum(mul(x, c));
  Tensor g = backward(loss).at(x);
  CHECK(g.at(0) == 5.0);
  CHECK(g.at(1) == 5.0);
}
