#include "kinefit/render.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace kinefit {

long long BinaryMask::count() const {
  long long n = 0;
  for (uint8_t v : on) n += v != 0;
  return n;
}

void Camera::validate() const {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("camera: non-positive image size " + std::to_string(width) + "x" +
                                std::to_string(height));
  if (fx <= 0 || fy <= 0) throw std::invalid_argument("camera: focal lengths must be positive");
  if (cx < 0 || cx >= width || cy < 0 || cy >= height)
    throw std::invalid_argument("camera: principal point outside the image");
}

std::array<double, 16> Camera::camera_from_world() const {
  // Rigid inverse: R^T, -R^T t.
  const auto& m = world_from_camera;
  std::array<double, 16> inv{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) inv[static_cast<size_t>(r) * 4 + c] = m[static_cast<size_t>(c) * 4 + r];
  for (int r = 0; r < 3; ++r) {
    double acc = 0;
    for (int c = 0; c < 3; ++c) acc += inv[static_cast<size_t>(r) * 4 + c] * m[static_cast<size_t>(c) * 4 + 3];
    inv[static_cast<size_t>(r) * 4 + 3] = -acc;
  }
  inv[15] = 1.0;
  return inv;
}

Camera Camera::look_at(double fx, double fy, double cx, double cy, int width, int height,
                       const std::array<double, 3>& eye, const std::array<double, 3>& target,
                       const std::array<double, 3>& up) {
  auto norm = [](std::array<double, 3> v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n < 1e-12) throw std::invalid_argument("camera look_at: degenerate direction");
    return std::array<double, 3>{v[0] / n, v[1] / n, v[2] / n};
  };
  auto cross = [](const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return std::array<double, 3>{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                                 a[0] * b[1] - a[1] * b[0]};
  };
  const auto fwd = norm({target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]});
  const auto right = norm(cross(fwd, up));
  const auto down = cross(fwd, right);  // y axis of a y-down image frame

  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.width = width;
  cam.height = height;
  for (int r = 0; r < 3; ++r) {
    cam.world_from_camera[static_cast<size_t>(r) * 4 + 0] = right[static_cast<size_t>(r)];
    cam.world_from_camera[static_cast<size_t>(r) * 4 + 1] = down[static_cast<size_t>(r)];
    cam.world_from_camera[static_cast<size_t>(r) * 4 + 2] = fwd[static_cast<size_t>(r)];
    cam.world_from_camera[static_cast<size_t>(r) * 4 + 3] = eye[static_cast<size_t>(r)];
  }
  cam.world_from_camera[12] = cam.world_from_camera[13] = cam.world_from_camera[14] = 0;
  cam.world_from_camera[15] = 1;
  cam.validate();
  return cam;
}

namespace {

constexpr double kNearPlane = 1e-4;

// Pixel-center coordinate planes, cached per image size. The tensors are
// immutable constants, safe to share across tapes and threads.
struct PixelPlanes {
  Tensor px, py;  // [h*w]
};

const PixelPlanes& pixel_planes(int width, int height) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, PixelPlanes> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(width, height);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const size_t n = static_cast<size_t>(width) * height;
    std::vector<double> xs(n), ys(n);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        xs[static_cast<size_t>(y) * width + x] = x;
        ys[static_cast<size_t>(y) * width + x] = y;
      }
    PixelPlanes planes{Tensor::from({height * width}, std::move(xs)),
                       Tensor::from({height * width}, std::move(ys))};
    it = cache.emplace(key, std::move(planes)).first;
  }
  return it->second;
}

}  // namespace

PixelCoords project(const Camera& camera, const Tensor& point) {
  camera.validate();
  if (point.size() != 3) throw std::invalid_argument("project: point must have 3 entries");

  const auto cw = camera.camera_from_world();
  Tensor cam_rows = Tensor::from({3, 4}, std::vector<double>(cw.begin(), cw.begin() + 12));
  Tensor homog_parts[] = {point, Tensor::scalar(1.0)};
  Tensor pc = matmul(cam_rows, reshape(concat(homog_parts), {4, 1}));  // [3,1]

  Tensor z = slice(pc, 2, 1);
  const double depth = z.value();
  if (!(depth > kNearPlane)) throw BehindCameraError(depth);

  Tensor u = add(mul(div(slice(pc, 0, 1), z), Tensor::scalar(camera.fx)),
                 Tensor::scalar(camera.cx));
  Tensor v = add(mul(div(slice(pc, 1, 1), z), Tensor::scalar(camera.fy)),
                 Tensor::scalar(camera.cy));
  return {u, v, z};
}

Tensor soft_silhouette(std::span<const Segment> segments, const Camera& camera, double tau) {
  camera.validate();
  if (!(tau > 0)) throw std::invalid_argument("soft_silhouette: tau must be positive");

  const auto& planes = pixel_planes(camera.width, camera.height);
  const Tensor one = Tensor::scalar(1.0);

  // Vacancy product: prod_i (1 - s_i), where s_i is the per-capsule
  // occupancy. Starts at the constant 1, so no segments means zero
  // occupancy exactly.
  Tensor vacancy = Tensor::full({camera.height * camera.width}, 1.0);
  for (const Segment& seg : segments) {
    PixelCoords a = project(camera, seg.p0);
    PixelCoords b = project(camera, seg.p1);

    // Screen-space capsule radius from the mean endpoint depth.
    Tensor zmean = mul(add(a.depth, b.depth), Tensor::scalar(0.5));
    Tensor r = div(Tensor::scalar(seg.radius * camera.fx), zmean);

    Tensor ex = sub(b.u, a.u);
    Tensor ey = sub(b.v, a.v);
    Tensor len2 = add(add(square(ex), square(ey)), Tensor::scalar(1e-12));

    Tensor dx = sub(planes.px, a.u);
    Tensor dy = sub(planes.py, a.v);
    Tensor along = min_const(max_const(div(add(mul(dx, ex), mul(dy, ey)), len2), 0.0), 1.0);
    Tensor rx = sub(dx, mul(along, ex));
    Tensor ry = sub(dy, mul(along, ey));
    // Guarded sqrt keeps the distance differentiable on the capsule axis.
    Tensor dist = sqrt(add(add(square(rx), square(ry)), Tensor::scalar(1e-12)));

    Tensor occupancy = sigmoid(mul(sub(r, dist), Tensor::scalar(1.0 / tau)));
    vacancy = mul(vacancy, sub(one, occupancy));
  }

  // Clamp keeps the combined mask strictly below 1 for pixels deep inside
  // several capsules.
  Tensor soft = sub(one, max_const(vacancy, 1e-15));
  return reshape(soft, {camera.height, camera.width});
}

Tensor composite_hybrid(const Tensor& soft, double tool_intensity, const Tensor& background) {
  if (soft.shape != background.shape)
    throw std::invalid_argument("composite_hybrid: mask " + shape_str(soft.shape) +
                                " vs background " + shape_str(background.shape));
  if (tool_intensity < 0.0 || tool_intensity > 1.0)
    throw std::invalid_argument("composite_hybrid: tool intensity outside [0, 1]");
  Tensor one = Tensor::scalar(1.0);
  return add(mul(soft, Tensor::scalar(tool_intensity)), mul(sub(one, soft), background));
}

BinaryMask threshold_mask(const Tensor& soft, double level) {
  if (soft.shape.size() != 2)
    throw std::invalid_argument("threshold_mask: expects a 2-D mask, got " + shape_str(soft.shape));
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("threshold_mask: level must lie strictly inside (0, 1)");
  BinaryMask mask;
  mask.height = soft.shape[0];
  mask.width = soft.shape[1];
  mask.on.resize(static_cast<size_t>(mask.height) * mask.width);
  const auto& v = soft.values();
  for (size_t i = 0; i < mask.on.size(); ++i) mask.on[i] = v[i] >= level ? 1 : 0;
  return mask;
}

}  // namespace kinefit
