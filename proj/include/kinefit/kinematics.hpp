#pragma once

#include <array>
#include <string>
#include <vector>

#include "kinefit/tensor.hpp"

namespace kinefit {

enum class JointKind { Revolute, Prismatic };

/// One link in standard (distal) Denavit-Hartenberg convention:
/// RotZ(theta) * TransZ(d) * TransX(a) * RotX(alpha). The joint value is
/// added to theta_offset (revolute) or d_offset (prismatic).
struct DhLink {
  double a = 0.0;
  double alpha = 0.0;
  double d_offset = 0.0;
  double theta_offset = 0.0;
  JointKind kind = JointKind::Revolute;
  double radius = 0.005;  // capsule radius used by the renderer, meters
};

/// Serial chain. With `jaw` set, the final link models a gripper: it
/// contributes two capsules fanned from the wrist frame by +/- half the
/// last joint value instead of one capsule along the chain.
struct ArmModel {
  std::string name;
  std::vector<DhLink> links;
  bool jaw = false;

  int joint_count() const { return static_cast<int>(links.size()); }
  void validate() const;
};

/// Arm mounting pose: axis-angle rotation (rx, ry, rz) with norm < pi
/// followed by translation (tx, ty, tz).
struct BasePose {
  std::array<double, 6> v{};

  static BasePose from(std::array<double, 6> v);
  void validate() const;
  std::vector<double> as_vector() const { return {v.begin(), v.end()}; }
};

/// World-space capsule between two frame origins.
struct Segment {
  Tensor p0;  // [3]
  Tensor p1;  // [3]
  double radius = 0.0;
};

/// 4x4 link transform, differentiable w.r.t. the scalar joint value.
Tensor dh_transform(const DhLink& link, const Tensor& joint_value);

/// 4x4 rigid transform from a 6-vector pose (Rodrigues rotation +
/// translation); differentiable and stable near zero rotation.
Tensor pose_transform(const Tensor& pose6);

/// Capsule segments of the arm in world space for the given joint vector
/// (length = link count) and mounting pose.
std::vector<Segment> forward_kinematics(const ArmModel& arm, const Tensor& joints,
                                        const Tensor& pose6);

}  // namespace kinefit
