#include "kinefit/gradcheck.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kinefit/correction.hpp"
#include "kinefit/kinematics.hpp"
#include "kinefit/loss.hpp"
#include "kinefit/render.hpp"
#include "kinefit/rng.hpp"

namespace kinefit {

namespace {

double eval_at(const ScalarFn& f, const Tensor& point, long long coord) {
  Tape scratch;
  Tensor out = f(scratch, point);
  if (!out.is_scalar())
    throw std::invalid_argument("finite_diff_check: function output is not scalar");
  const double v = out.value();
  if (!std::isfinite(v))
    throw std::runtime_error("finite_diff_check: non-finite value perturbing coordinate " +
                             std::to_string(coord));
  return v;
}

}  // namespace

double finite_diff_check(const ScalarFn& f, const Tensor& point, double eps) {
  if (eps <= 0) throw std::invalid_argument("finite_diff_check: eps must be positive");

  Tape tape;
  Tensor x = tape.leaf(point);
  Tensor loss = f(tape, x);
  if (!loss.is_scalar())
    throw std::invalid_argument("finite_diff_check: function output is not scalar");
  if (!std::isfinite(loss.value()))
    throw std::runtime_error("finite_diff_check: non-finite value at the evaluation point");
  Tensor grad = backward(loss).at(x);

  double worst = 0.0;
  const long long n = point.size();
  for (long long i = 0; i < n; ++i) {
    Tensor hi = Tensor::from(point.shape, point.values());
    Tensor lo = Tensor::from(point.shape, point.values());
    (*hi.data)[static_cast<size_t>(i)] += eps;
    (*lo.data)[static_cast<size_t>(i)] -= eps;
    const double fd = (eval_at(f, hi, i) - eval_at(f, lo, i)) / (2.0 * eps);
    const double err = std::abs(grad.at(i) - fd) / (std::abs(fd) + 1e-8);
    if (err > worst) worst = err;
  }
  return worst;
}

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(static_cast<size_t>(numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(shape, std::move(v));
}

/// Randomized single-arm view: short serial chain near the origin, camera
/// at the origin looking down +z, textured background, observed features
/// taken from a perturbed pose of the same arm.
struct SceneCheck {
  ArmModel arm;
  Camera camera;
  Tensor background;
  Tensor f_obs;
  Tensor k_m, k_prev;
  RegWeights reg;
  double tau = 0.0;
  double tool_intensity = 0.0;
  int dilate_radius = 0;
  Tensor point;  // joint values followed by the 6-vector mounting pose
};

Tensor scene_objective(const SceneCheck& sc, const FeatureExtractor& features, const Tensor& x) {
  const int joints = sc.arm.joint_count();
  Tensor k_hat = slice(x, 0, joints);
  Tensor pose = slice(x, joints, 6);
  auto segments = forward_kinematics(sc.arm, k_hat, pose);
  Tensor soft = soft_silhouette(segments, sc.camera, sc.tau);
  Tensor hybrid = composite_hybrid(soft, sc.tool_intensity, sc.background);
  Tensor rendered = features.extract(hybrid);
  Tensor attn = attention_map(soft, sc.dilate_radius);
  Tensor loss = acs_loss(sc.f_obs, rendered, attn);
  return add(loss, st_regularizer(k_hat, sc.k_m, sc.k_prev, sc.reg));
}

/// The objective is piecewise smooth: the attention floor and the dilation
/// argmax switch branches on measure-zero sets. A scene is testable by
/// central differences only when the evaluation point sits clear of both
/// branch boundaries and every input coordinate carries a usable gradient.
bool fd_testable(const SceneCheck& sc, const FeatureExtractor& features) {
  const int joints = sc.arm.joint_count();
  Tensor k = slice(sc.point, 0, joints);
  Tensor pose = slice(sc.point, joints, 6);
  auto segments = forward_kinematics(sc.arm, k, pose);
  Tensor soft = soft_silhouette(segments, sc.camera, sc.tau);

  const int h = sc.camera.height, w = sc.camera.width;
  const int r = sc.dilate_radius;
  std::vector<std::pair<int, int>> offs;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dy * dy + dx * dx <= r * r) offs.emplace_back(dy, dx);

  // The per-capsule screen distance is sqrt(|pixel - axis|^2 + 1e-12), so a
  // pixel center sitting on a projected axis line puts the evaluation at the
  // bottom of that V, where the slope reverses inside a central-difference
  // stencil. Keep every pixel off every axis by a comfortable margin.
  const double axis_margin = 5e-3;  // pixels
  for (const Segment& seg : segments) {
    const PixelCoords a = project(sc.camera, seg.p0);
    const PixelCoords b = project(sc.camera, seg.p1);
    const double u0 = a.u.value(), v0 = a.v.value();
    const double ex = b.u.value() - u0, ey = b.v.value() - v0;
    const double len2 = ex * ex + ey * ey + 1e-12;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dx = x - u0, dy = y - v0;
        const double s = std::min(std::max((dx * ex + dy * ey) / len2, 0.0), 1.0);
        const double rx = dx - s * ex, ry = dy - s * ey;
        if (rx * rx + ry * ry < axis_margin * axis_margin) return false;
      }
    }
  }

  const double floor_margin = 1.2e-4;  // vs. perturbations of ~4e-5 in mask units
  const double tie_margin = 1.2e-4;
  const auto& v = soft.values();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double top1 = -1.0, top2 = -1.0;
      for (auto [dy, dx] : offs) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        const double s = v[static_cast<size_t>(yy) * w + xx];
        if (s > top1) {
          top2 = top1;
          top1 = s;
        } else if (s > top2) {
          top2 = s;
        }
      }
      if (std::abs(top1 - 0.05) < floor_margin) return false;
      // Ties only reroute meaningful gradient where the winner is neither
      // floored away nor fully saturated (capsule overlaps reach ~1-1e-3,
      // where the occupancy still carries a usable derivative).
      if (top1 > 0.05 && top1 < 1.0 - 1e-6 && top1 - top2 < tie_margin) return false;
    }
  }

  Tape tape;
  Tensor xt = tape.leaf(sc.point);
  Tensor grad = backward(scene_objective(sc, features, xt)).at(xt);
  for (long long i = 0; i < grad.size(); ++i)
    if (std::abs(grad.at(i)) < 5e-5) return false;
  return true;
}

SceneCheck draw_scene(Rng& rng, const FeatureExtractor& features) {
  SceneCheck sc;

  const int joints = rng.uniform_int(2, 3);
  sc.arm.name = "probe";
  sc.arm.jaw = rng.uniform_int(0, 1) == 1;
  for (int i = 0; i < joints; ++i) {
    DhLink link;
    link.a = rng.uniform(0.035, 0.06);
    const double bend = rng.uniform(0.25, 0.6);
    link.alpha = rng.uniform_int(0, 1) == 1 ? bend : -bend;
    link.d_offset = rng.uniform(-0.01, 0.01);
    link.theta_offset = rng.uniform(-0.3, 0.3);
    link.radius = rng.uniform(0.012, 0.02);
    sc.arm.links.push_back(link);
  }

  sc.camera.height = rng.uniform_int(20, 26);
  sc.camera.width = rng.uniform_int(26, 34);
  sc.camera.fx = rng.uniform(40.0, 50.0);
  sc.camera.fy = rng.uniform(40.0, 50.0);
  sc.camera.cx = sc.camera.width / 2.0 + rng.uniform(-1.0, 1.0);
  sc.camera.cy = sc.camera.height / 2.0 + rng.uniform(-1.0, 1.0);

  sc.tau = rng.uniform(1.0, 2.0);
  sc.tool_intensity = rng.uniform(0.75, 0.95);
  sc.dilate_radius = rng.uniform_int(1, 3);
  sc.background = random_tensor({sc.camera.height, sc.camera.width}, rng, 0.1, 0.9);

  std::vector<double> pose = {rng.uniform(-0.2, 0.2),  rng.uniform(-0.2, 0.2),
                              rng.uniform(-0.2, 0.2),  rng.uniform(-0.04, 0.04),
                              rng.uniform(-0.04, 0.04), rng.uniform(0.38, 0.44)};
  std::vector<double> k_true(static_cast<size_t>(joints));
  for (auto& k : k_true) k = rng.uniform(-0.4, 0.4);

  // Observed image: the same arm at the true joints, evaluated off-tape.
  Tensor truth_joints = Tensor::from({joints}, k_true);
  Tensor truth_pose = Tensor::from({6}, pose);
  auto truth_segments = forward_kinematics(sc.arm, truth_joints, truth_pose);
  Tensor truth_soft = soft_silhouette(truth_segments, sc.camera, sc.tau);
  Tensor observed = composite_hybrid(truth_soft, sc.tool_intensity, sc.background);
  sc.f_obs = features.extract(observed);

  // The evaluation point sits well off the observed configuration so the
  // image term contributes a generic slope on every coordinate.
  std::vector<double> x(k_true);
  for (auto& k : x) k += rng.normal(0.0, 0.12);
  std::vector<double> k_m(x), k_prev(x);
  for (auto& k : k_m) k += rng.normal(0.0, 0.02);
  for (auto& k : k_prev) k += rng.normal(0.0, 0.02);
  sc.k_m = Tensor::from({joints}, std::move(k_m));
  sc.k_prev = Tensor::from({joints}, std::move(k_prev));

  for (int i = 0; i < 6; ++i)
    x.push_back(pose[static_cast<size_t>(i)] + rng.normal(0.0, i < 3 ? 0.1 : 0.008));
  sc.point = Tensor::from({joints + 6}, std::move(x));
  return sc;
}

SceneCheck random_scene(Rng& rng, const FeatureExtractor& features) {
  for (int attempt = 0; attempt < 500; ++attempt) {
    SceneCheck sc = draw_scene(rng, features);
    if (fd_testable(sc, features)) return sc;
  }
  throw std::logic_error("gradient_suite: could not draw a testable scene in 500 attempts");
}

}  // namespace

GradCheckReport gradient_suite(uint64_t seed, int scenes) {
  if (scenes < 1) throw std::invalid_argument("gradient_suite: scenes must be >= 1");

  Rng rng(seed);
  GradCheckReport report;
  auto run = [&report](std::string name, const ScalarFn& f, const Tensor& point, double eps,
                       double tol) {
    GradCheckCase c;
    c.name = std::move(name);
    c.error = finite_diff_check(f, point, eps);
    c.tolerance = tol;
    c.passed = c.error < c.tolerance;
    report.cases.push_back(std::move(c));
  };

  const double eps = 1e-5;
  const double tol = 1e-4;

  Tensor v = random_tensor({6}, rng, -1.0, 1.0);
  Tensor v_pos = random_tensor({6}, rng, 0.5, 2.0);
  Tensor other = random_tensor({6}, rng, -1.0, 1.0);

  run("add", [&](Tape&, const Tensor& x) { return sum(add(x, other)); }, v, eps, tol);
  run("sub", [&](Tape&, const Tensor& x) { return sum(sub(other, x)); }, v, eps, tol);
  run("mul", [&](Tape&, const Tensor& x) { return sum(mul(x, other)); }, v, eps, tol);
  run("div", [&](Tape&, const Tensor& x) { return sum(div(other, x)); }, v_pos, eps, tol);
  run("sum", [&](Tape&, const Tensor& x) { return sum(x); }, v, eps, tol);
  run("mean", [&](Tape&, const Tensor& x) { return mean(square(x)); }, v, eps, tol);
  run("sigmoid", [&](Tape&, const Tensor& x) { return sum(sigmoid(x)); }, v, eps, tol);
  run("tanh", [&](Tape&, const Tensor& x) { return sum(tanh(x)); }, v, eps, tol);
  run("sin", [&](Tape&, const Tensor& x) { return sum(sin(x)); }, v, eps, tol);
  run("cos", [&](Tape&, const Tensor& x) { return sum(cos(x)); }, v, eps, tol);
  run("square", [&](Tape&, const Tensor& x) { return sum(square(x)); }, v, eps, tol);
  run("sqrt", [&](Tape&, const Tensor& x) { return sum(sqrt(x)); }, v_pos, eps, tol);
  run("pow", [&](Tape&, const Tensor& x) { return sum(pow_const(x, 2.5)); }, v_pos, eps, tol);
  run("reshape", [&](Tape&, const Tensor& x) { return sum(square(reshape(x, {2, 3}))); }, v, eps,
      tol);
  run("slice", [&](Tape&, const Tensor& x) { return sum(square(slice(x, 1, 3))); }, v, eps, tol);
  run("broadcast",
      [&](Tape&, const Tensor& x) { return sum(mul(broadcast_to(x, {6}), other)); },
      Tensor::scalar(rng.uniform(0.5, 1.5)), eps, tol);
  run("concat",
      [&](Tape&, const Tensor& x) {
        Tensor parts[] = {x, other};
        return sum(square(concat(parts)));
      },
      v, eps, tol);

  // Kinked ops evaluate away from their kinks so the central difference
  // stays valid.
  Tensor away = Tensor::from({4}, {-1.2, -0.4, 0.6, 1.9});
  run("relu", [&](Tape&, const Tensor& x) { return sum(relu(x)); }, away, eps, tol);
  run("min_const", [&](Tape&, const Tensor& x) { return sum(min_const(x, 0.1)); }, away, eps, tol);
  run("max_const", [&](Tape&, const Tensor& x) { return sum(max_const(x, 0.1)); }, away, eps, tol);

  Tensor m_fixed = Tensor::from({2, 3}, {0.3, -0.7, 1.1, 0.2, -0.5, 0.9});
  run("matmul",
      [&](Tape&, const Tensor& x) {
        Tensor lhs = reshape(x, {3, 2});
        return sum(square(matmul(m_fixed, lhs)));
      },
      v, eps, tol);

  // A shuffled even grid keeps every pairwise gap far above eps, so no disc
  // window's argmax can flip inside the stencil.
  {
    std::vector<double> grid(20);
    for (int i = 0; i < 20; ++i) grid[i] = i / 20.0 + rng.uniform(-0.005, 0.005);
    for (int i = 19; i > 0; --i) std::swap(grid[i], grid[rng.uniform_int(0, i)]);
    run("maxfilter_disc",
        [&](Tape&, const Tensor& x) { return sum(square(maxfilter_disc(reshape(x, {4, 5}), 1))); },
        Tensor::from({20}, grid), eps, tol);
  }

  // Correction net, differentiated both through its parameters and its
  // measurement window. Parameters are jittered off the zero output init.
  // Steps of 1e-6: the tanh stack's truncation error at 1e-5 can approach
  // the tolerance, while roundoff at 1e-6 stays near 1e-9. Saturated tanh
  // units can leave individual coordinates with near-zero gradient, where
  // the relative check would measure only stencil noise, so the draw is
  // redone until every coordinate carries a usable slope.
  {
    const int n = 3, d = 4;
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 500)
        throw std::logic_error("gradient_suite: could not draw a testable net in 500 attempts");
      CorrectionNet net = CorrectionNet::make(n, d, {6, 5}, seed);
      for (Tensor* p : net.params())
        for (auto& w : *p->data) w += rng.uniform(-0.4, 0.4);
      Tensor window = random_tensor({n, d}, rng, -1.5, 1.5);
      Tensor target = random_tensor({d}, rng, -1.0, 1.0);
      Tensor window_point = random_tensor({n, d}, rng, -1.5, 1.5);

      std::vector<Shape> shapes;
      std::vector<double> flat;
      for (Tensor* p : net.params()) {
        shapes.push_back(p->shape);
        flat.insert(flat.end(), p->values().begin(), p->values().end());
      }
      Tensor theta_point = Tensor::from({static_cast<int>(flat.size())}, flat);

      auto theta_loss = [&](Tape&, const Tensor& x) {
        BoundNet bound;
        int off = 0;
        for (size_t i = 0; i < shapes.size(); i += 2) {
          const int in = shapes[i][0], out = shapes[i][1];
          bound.weights.push_back(reshape(slice(x, off, in * out), {in, out}));
          off += in * out;
          bound.biases.push_back(reshape(slice(x, off, out), {1, out}));
          off += out;
        }
        return mean(square(sub(correction_forward(bound, window), target)));
      };
      auto window_loss = [&](Tape& tape, const Tensor& x) {
        return mean(square(sub(correction_forward(bind(tape, net), reshape(x, {n, d})), target)));
      };

      auto min_grad = [](const ScalarFn& f, const Tensor& point) {
        Tape tape;
        Tensor xt = tape.leaf(point);
        Tensor grad = backward(f(tape, xt)).at(xt);
        double lo = std::numeric_limits<double>::infinity();
        for (long long i = 0; i < grad.size(); ++i) lo = std::min(lo, std::abs(grad.at(i)));
        return lo;
      };
      if (min_grad(theta_loss, theta_point) < 5e-5 || min_grad(window_loss, window_point) < 5e-5)
        continue;

      run("net theta", theta_loss, theta_point, 1e-6, tol);
      run("net window", window_loss, window_point, 1e-6, tol);
      break;
    }
  }

  // Full per-frame objective: silhouette render, feature extraction,
  // attention-weighted alignment loss plus the kinematic regularizer,
  // differentiated jointly w.r.t. joints and mounting pose.
  FilterBankExtractor features;
  for (int s = 1; s <= scenes; ++s) {
    SceneCheck sc = random_scene(rng, features);
    auto objective = [&](Tape&, const Tensor& x) { return scene_objective(sc, features, x); };
    run("scene " + std::to_string(s), objective, sc.point, 1e-6, 1e-3);
  }

  report.passed = true;
  for (const auto& c : report.cases) report.passed = report.passed && c.passed;
  return report;
}

}  // namespace kinefit
