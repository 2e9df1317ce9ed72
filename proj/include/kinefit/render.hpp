#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinefit/kinematics.hpp"
#include "kinefit/tensor.hpp"

namespace kinefit {

/// Binary segmentation mask, row-major.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> on;

  bool at(int y, int x) const { return on[static_cast<size_t>(y) * width + x] != 0; }
  long long count() const;
};

struct BehindCameraError : std::runtime_error {
  explicit BehindCameraError(double depth_)
      : std::runtime_error("point behind camera, depth " + std::to_string(depth_)),
        depth(depth_) {}
  double depth;
};

/// Pinhole camera. world_from_camera maps camera coordinates (x right,
/// y down, z forward) to world coordinates.
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  std::array<double, 16> world_from_camera{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  void validate() const;
  std::array<double, 16> camera_from_world() const;

  /// Camera at `eye` looking toward `target`; `up` disambiguates roll.
  static Camera look_at(double fx, double fy, double cx, double cy, int width, int height,
                        const std::array<double, 3>& eye, const std::array<double, 3>& target,
                        const std::array<double, 3>& up = {0, 0, 1});
};

struct PixelCoords {
  Tensor u, v;      // scalars
  Tensor depth;     // scalar, camera z
};

/// Projects a world point (tensor [3]); throws BehindCameraError if the
/// camera-space depth is at or below the near plane (1e-4).
PixelCoords project(const Camera& camera, const Tensor& point);

/// Soft capsule silhouette: per-pixel occupancy in (0, 1), shape [h, w].
/// An empty segment list renders an exact zero mask. tau is the sigmoid
/// softness in pixels.
Tensor soft_silhouette(std::span<const Segment> segments, const Camera& camera, double tau);

/// Blends a constant tool intensity over a background image using the
/// soft mask as per-pixel opacity.
Tensor composite_hybrid(const Tensor& soft, double tool_intensity, const Tensor& background);

/// Hard mask: pixel on iff soft occupancy >= level.
BinaryMask threshold_mask(const Tensor& soft, double level = 0.5);

}  // namespace kinefit
