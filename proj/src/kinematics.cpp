#include "kinefit/kinematics.hpp"

#include <cmath>
#include <stdexcept>

namespace kinefit {

namespace {

Tensor mat4(std::vector<double> v) { return Tensor::from({4, 4}, std::move(v)); }

Tensor identity4() {
  return mat4({1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
}

// One-hot 4x4 with `v` at (row, col).
Tensor unit4(int row, int col, double v = 1.0) {
  std::vector<double> m(16, 0.0);
  m[static_cast<size_t>(row) * 4 + col] = v;
  return mat4(std::move(m));
}

Tensor origin_of(const Tensor& transform) {
  static const Tensor e3 = Tensor::from({4, 1}, {0, 0, 0, 1});
  return slice(matmul(transform, e3), 0, 3);
}

}  // namespace

void ArmModel::validate() const {
  if (links.empty()) throw std::invalid_argument("arm '" + name + "': no links");
  for (size_t i = 0; i < links.size(); ++i)
    if (links[i].radius <= 0.0)
      throw std::invalid_argument("arm '" + name + "': link " + std::to_string(i) +
                                  " has non-positive capsule radius");
  if (jaw && links.size() < 2)
    throw std::invalid_argument("arm '" + name + "': jaw arms need at least two links");
}

BasePose BasePose::from(std::array<double, 6> v) {
  BasePose p{v};
  p.validate();
  return p;
}

void BasePose::validate() const {
  const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(norm < M_PI))
    throw std::invalid_argument("base pose: rotation vector norm " + std::to_string(norm) +
                                " is not below pi");
}

Tensor dh_transform(const DhLink& link, const Tensor& joint_value) {
  if (!joint_value.is_scalar())
    throw std::invalid_argument("dh_transform: joint value must be scalar");
  const double ca = std::cos(link.alpha);
  const double sa = std::sin(link.alpha);

  if (link.kind == JointKind::Prismatic) {
    const double ct = std::cos(link.theta_offset);
    const double st = std::sin(link.theta_offset);
    // clang-format off
    Tensor at_zero = mat4({
        ct, -st * ca,  st * sa, link.a * ct,
        st,  ct * ca, -ct * sa, link.a * st,
         0,       sa,       ca, link.d_offset,
         0,        0,        0, 1});
    // clang-format on
    return add(at_zero, mul(unit4(2, 3), joint_value));
  }

  Tensor theta = add(joint_value, Tensor::scalar(link.theta_offset));
  Tensor s = sin(theta);
  Tensor c = cos(theta);
  // The matrix is affine in (sin theta, cos theta); split it into the two
  // coefficient masks plus the constant part.
  // clang-format off
  Tensor ms = mat4({
      0, -ca,  sa, 0,
      1,   0,   0, link.a,
      0,   0,   0, 0,
      0,   0,   0, 0});
  Tensor mc = mat4({
      1,   0,   0, link.a,
      0,  ca, -sa, 0,
      0,   0,   0, 0,
      0,   0,   0, 0});
  Tensor m0 = mat4({
      0,   0,   0, 0,
      0,   0,   0, 0,
      0,  sa,  ca, link.d_offset,
      0,   0,   0, 1});
  // clang-format on
  return add(add(mul(ms, s), mul(mc, c)), m0);
}

Tensor pose_transform(const Tensor& pose6) {
  if (pose6.size() != 6) throw std::invalid_argument("pose_transform: pose must have 6 entries");
  Tensor wx = slice(pose6, 0, 1);
  Tensor wy = slice(pose6, 1, 1);
  Tensor wz = slice(pose6, 2, 1);

  Tensor w = slice(pose6, 0, 3);
  // Guarded squared angle keeps sqrt and the ratios finite at zero
  // rotation; the guard perturbs the angle by < 1e-12.
  Tensor phi2 = add(sum(square(w)), Tensor::scalar(1e-24));
  Tensor phi = sqrt(phi2);
  Tensor a = div(sin(phi), phi);
  // (1 - cos phi) / phi^2 computed via the half-angle identity, which is
  // well conditioned for small angles.
  Tensor half_sin = sin(mul(phi, Tensor::scalar(0.5)));
  Tensor b = div(mul(square(half_sin), Tensor::scalar(2.0)), phi2);

  // Skew matrix of w embedded in 4x4 (last row/column zero).
  Tensor k = add(add(mul(add(unit4(2, 1), unit4(1, 2, -1.0)), wx),
                     mul(add(unit4(0, 2), unit4(2, 0, -1.0)), wy)),
                 mul(add(unit4(1, 0), unit4(0, 1, -1.0)), wz));

  Tensor rot = add(identity4(), add(mul(k, a), mul(matmul(k, k), b)));
  Tensor trans = add(add(mul(unit4(0, 3), slice(pose6, 3, 1)), mul(unit4(1, 3), slice(pose6, 4, 1))),
                     mul(unit4(2, 3), slice(pose6, 5, 1)));
  return add(rot, trans);
}

std::vector<Segment> forward_kinematics(const ArmModel& arm, const Tensor& joints,
                                        const Tensor& pose6) {
  arm.validate();
  if (joints.size() != arm.joint_count())
    throw std::invalid_argument("arm '" + arm.name + "': " + std::to_string(joints.size()) +
                                " joint values for " + std::to_string(arm.joint_count()) +
                                " links");

  std::vector<Segment> segments;
  segments.reserve(arm.links.size() + (arm.jaw ? 1 : 0));

  Tensor t = pose_transform(pose6);
  Tensor prev = origin_of(t);
  const int last = arm.joint_count() - 1;
  for (int i = 0; i <= last; ++i) {
    const DhLink& link = arm.links[static_cast<size_t>(i)];
    Tensor q = slice(joints, i, 1);
    if (arm.jaw && i == last) {
      for (double side : {0.5, -0.5}) {
        Tensor open = mul(q, Tensor::scalar(side));
        Tensor tip = matmul(t, dh_transform(link, open));
        segments.push_back({prev, origin_of(tip), link.radius});
      }
    } else {
      t = matmul(t, dh_transform(link, q));
      Tensor here = origin_of(t);
      segments.push_back({prev, here, link.radius});
      prev = here;
    }
  }
  return segments;
}

}  // namespace kinefit
