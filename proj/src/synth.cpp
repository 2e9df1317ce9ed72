#include "kinefit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "kinefit/image_io.hpp"
#include "kinefit/rng.hpp"

namespace kinefit {

namespace {

constexpr double kSensorSigma = 0.01;
constexpr uint64_t kFrameStride = 0x9e3779b97f4a7c15ULL;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

int total_joints(const std::vector<ArmModel>& arms) {
  int d = 0;
  for (const auto& arm : arms) d += arm.joint_count();
  return d;
}

}  // namespace

void TrajectorySpec::validate(int d) const {
  if (length < 1) throw std::invalid_argument("trajectory: length must be >= 1");
  if (!offsets.empty() && static_cast<int>(offsets.size()) != d)
    throw std::invalid_argument("trajectory: offsets must have one entry per joint");
  if (!amplitudes.empty() && static_cast<int>(amplitudes.size()) != d)
    throw std::invalid_argument("trajectory: amplitudes must have one entry per joint");
  for (double a : amplitudes)
    if (!(a >= 0.0)) throw std::invalid_argument("trajectory: amplitudes must be >= 0");
  if (!(freq_min >= 0.0) || !(freq_max >= freq_min))
    throw std::invalid_argument("trajectory: need 0 <= freq_min <= freq_max");
  if (smoothness < 1) throw std::invalid_argument("trajectory: smoothness must be >= 1");
}

void NoiseSpec::validate(int d) const {
  if (!(sigma_white >= 0.0) || !(sigma_bias >= 0.0))
    throw std::invalid_argument("noise: sigmas must be >= 0");
  if (!joint_scale.empty() && static_cast<int>(joint_scale.size()) != d)
    throw std::invalid_argument("noise: joint_scale must have one entry per joint");
  for (double s : joint_scale)
    if (!(s >= 0.0)) throw std::invalid_argument("noise: joint_scale must be >= 0");
}

void DomainSpec::validate() const {
  if (!(brightness > 0.0) || !(brightness <= 1.0))
    throw std::invalid_argument("domain: brightness must be in (0, 1]");
  if (!(smoke_amplitude >= 0.0))
    throw std::invalid_argument("domain: smoke_amplitude must be >= 0");
  if (!std::isfinite(bleed_amplitude))
    throw std::invalid_argument("domain: bleed_amplitude must be finite");
  if (bleed_count < 0) throw std::invalid_argument("domain: bleed_count must be >= 0");
}

const char* domain_name(DomainKind kind) {
  switch (kind) {
    case DomainKind::Regular: return "regular";
    case DomainKind::LowBrightness: return "low-brightness";
    case DomainKind::Smoke: return "smoke";
    case DomainKind::Bleeding: return "bleeding";
    case DomainKind::BgChange: return "bg-change";
  }
  throw std::invalid_argument("domain: unknown kind");
}

DomainKind domain_from_name(const std::string& name) {
  for (DomainKind kind : {DomainKind::Regular, DomainKind::LowBrightness, DomainKind::Smoke,
                          DomainKind::Bleeding, DomainKind::BgChange})
    if (name == domain_name(kind)) return kind;
  throw std::invalid_argument("domain: unknown kind '" + name + "'");
}

Tensor value_noise(int height, int width, int cells_y, int cells_x, uint64_t seed) {
  if (height < 1 || width < 1 || cells_y < 1 || cells_x < 1)
    throw std::invalid_argument("value_noise: sizes must be >= 1");
  Rng rng(seed);
  std::vector<double> lattice(static_cast<size_t>((cells_y + 1) * (cells_x + 1)));
  for (double& v : lattice) v = rng.uniform();

  std::vector<double> out(static_cast<size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    double gy = (y + 0.5) * cells_y / height - 0.5;
    gy = std::min(static_cast<double>(cells_y), std::max(0.0, gy));
    int y0 = std::min(static_cast<int>(gy), cells_y - 1);
    const double ty = gy - y0;
    for (int x = 0; x < width; ++x) {
      double gx = (x + 0.5) * cells_x / width - 0.5;
      gx = std::min(static_cast<double>(cells_x), std::max(0.0, gx));
      int x0 = std::min(static_cast<int>(gx), cells_x - 1);
      const double tx = gx - x0;
      const auto at = [&](int cy, int cx) {
        return lattice[static_cast<size_t>(cy) * (cells_x + 1) + cx];
      };
      const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
      const double bot = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
      out[static_cast<size_t>(y) * width + x] = top * (1 - ty) + bot * ty;
    }
  }
  return Tensor::from({height, width}, std::move(out));
}

Tensor background_texture(int height, int width, uint64_t seed) {
  Tensor base = value_noise(height, width, 4, 5, seed);
  Tensor detail = value_noise(height, width, 10, 13, seed ^ 0x5bf03635ULL);
  std::vector<double> out(static_cast<size_t>(height) * width);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = 0.08 + 0.18 * base.at(static_cast<long long>(i)) +
             0.06 * detail.at(static_cast<long long>(i));
  return Tensor::from({height, width}, std::move(out));
}

std::vector<std::vector<double>> gen_trajectory(const TrajectorySpec& spec,
                                                const std::vector<ArmModel>& arms) {
  const int d = total_joints(arms);
  spec.validate(d);

  Rng rng(spec.seed);
  std::vector<std::vector<double>> k(static_cast<size_t>(spec.length),
                                     std::vector<double>(static_cast<size_t>(d), 0.0));
  for (int j = 0; j < d; ++j) {
    const double offset = spec.offsets.empty() ? 0.0 : spec.offsets[static_cast<size_t>(j)];
    const double amplitude =
        spec.amplitudes.empty() ? 0.0 : spec.amplitudes[static_cast<size_t>(j)];
    std::vector<double> amp(static_cast<size_t>(spec.smoothness));
    std::vector<double> omega(static_cast<size_t>(spec.smoothness));
    std::vector<double> phase(static_cast<size_t>(spec.smoothness));
    for (int h = 0; h < spec.smoothness; ++h) {
      amp[static_cast<size_t>(h)] = amplitude * rng.uniform(0.5, 1.0) / spec.smoothness;
      omega[static_cast<size_t>(h)] = rng.uniform(spec.freq_min, spec.freq_max);
      phase[static_cast<size_t>(h)] = rng.uniform(0.0, 2.0 * M_PI);
    }
    for (int t = 0; t < spec.length; ++t) {
      double v = offset;
      for (int h = 0; h < spec.smoothness; ++h)
        v += amp[static_cast<size_t>(h)] *
             std::sin(omega[static_cast<size_t>(h)] * t + phase[static_cast<size_t>(h)]);
      k[static_cast<size_t>(t)][static_cast<size_t>(j)] = v;
    }
  }
  return k;
}

std::vector<std::vector<double>> corrupt_measurements(
    const std::vector<std::vector<double>>& truth, const NoiseSpec& spec) {
  if (truth.empty()) throw std::invalid_argument("corrupt: empty trajectory");
  const int d = static_cast<int>(truth[0].size());
  spec.validate(d);
  for (const auto& row : truth)
    if (static_cast<int>(row.size()) != d)
      throw std::invalid_argument("corrupt: ragged trajectory");

  const auto scale = [&](int j) {
    return spec.joint_scale.empty() ? 1.0 : spec.joint_scale[static_cast<size_t>(j)];
  };
  Rng rng(spec.seed);
  std::vector<double> walk(static_cast<size_t>(d), 0.0);
  std::vector<std::vector<double>> measured(truth.size());
  for (size_t t = 0; t < truth.size(); ++t) {
    measured[t].resize(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) {
      if (t > 0) walk[static_cast<size_t>(j)] += spec.sigma_bias * scale(j) * rng.normal();
      const double eps = spec.sigma_white * scale(j) * rng.normal();
      measured[t][static_cast<size_t>(j)] =
          truth[t][static_cast<size_t>(j)] + walk[static_cast<size_t>(j)] + eps;
    }
  }
  return measured;
}

std::vector<RenderedFrame> render_ground_truth(const std::vector<std::vector<double>>& truth,
                                               const std::vector<BasePose>& base_true,
                                               const Camera& camera,
                                               const std::vector<ArmModel>& arms,
                                               const Tensor& background, double tool_intensity,
                                               double tau, uint64_t seed) {
  camera.validate();
  if (arms.empty() || base_true.size() != arms.size())
    throw std::invalid_argument("render_ground_truth: one base pose per arm required");
  const int d = total_joints(arms);

  std::vector<RenderedFrame> rendered(truth.size());
  for (size_t t = 0; t < truth.size(); ++t) {
    if (static_cast<int>(truth[t].size()) != d)
      throw std::invalid_argument("render_ground_truth: joint row size mismatch");
    std::vector<Segment> segments;
    int joint = 0;
    for (size_t a = 0; a < arms.size(); ++a) {
      const int count = arms[a].joint_count();
      std::vector<double> values(truth[t].begin() + joint, truth[t].begin() + joint + count);
      Tensor joints = Tensor::from({count}, std::move(values));
      Tensor base = Tensor::from({6}, base_true[a].as_vector());
      auto part = forward_kinematics(arms[a], joints, base);
      segments.insert(segments.end(), part.begin(), part.end());
      joint += count;
    }
    RenderedFrame& frame = rendered[t];
    frame.soft = soft_silhouette(segments, camera, tau);
    frame.mask = threshold_mask(frame.soft);
    Tensor clean = composite_hybrid(frame.soft, tool_intensity, background);

    Rng rng(seed + kFrameStride * (static_cast<uint64_t>(t) + 1));
    std::vector<double> noisy(static_cast<size_t>(clean.size()));
    for (long long i = 0; i < clean.size(); ++i)
      noisy[static_cast<size_t>(i)] = clamp01(clean.at(i) + kSensorSigma * rng.normal());
    frame.image = Tensor::from(clean.shape, std::move(noisy));
  }
  return rendered;
}

Tensor apply_domain(const Tensor& image, const DomainSpec& spec, const DomainContext& ctx) {
  spec.validate();
  if (image.shape.size() != 2) throw std::invalid_argument("apply_domain: image must be [h, w]");
  const int height = image.shape[0];
  const int width = image.shape[1];

  switch (spec.kind) {
    case DomainKind::Regular:
      return image;

    case DomainKind::LowBrightness: {
      std::vector<double> out(static_cast<size_t>(image.size()));
      for (long long i = 0; i < image.size(); ++i)
        out[static_cast<size_t>(i)] = clamp01(image.at(i) * spec.brightness);
      return Tensor::from(image.shape, std::move(out));
    }

    case DomainKind::Smoke: {
      if (spec.smoke_amplitude == 0.0) return image;
      Tensor haze = value_noise(height, width, 3, 4, spec.seed);
      std::vector<double> out(static_cast<size_t>(image.size()));
      for (long long i = 0; i < image.size(); ++i)
        out[static_cast<size_t>(i)] = clamp01(image.at(i) + spec.smoke_amplitude * haze.at(i));
      return Tensor::from(image.shape, std::move(out));
    }

    case DomainKind::Bleeding: {
      if (ctx.mask.height != height || ctx.mask.width != width)
        throw std::invalid_argument("apply_domain: mask size mismatch");
      Rng rng(spec.seed);
      struct Disc {
        double cx, cy, r;
      };
      std::vector<Disc> discs(static_cast<size_t>(spec.bleed_count));
      const double side = static_cast<double>(std::min(height, width));
      for (auto& disc : discs) {
        disc.cx = rng.uniform(0.0, static_cast<double>(width));
        disc.cy = rng.uniform(0.0, static_cast<double>(height));
        disc.r = rng.uniform(0.06, 0.16) * side;
      }
      std::vector<double> out(static_cast<size_t>(image.size()));
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const long long i = static_cast<long long>(y) * width + x;
          if (ctx.mask.at(y, x)) {
            out[static_cast<size_t>(i)] = image.at(i);
            continue;
          }
          double field = 0.0;
          for (const auto& disc : discs) {
            const double dx = x - disc.cx, dy = y - disc.cy;
            field += std::max(0.0, 1.0 - (dx * dx + dy * dy) / (disc.r * disc.r));
          }
          field = std::min(1.0, field);
          out[static_cast<size_t>(i)] = clamp01(image.at(i) + spec.bleed_amplitude * field);
        }
      return Tensor::from(image.shape, std::move(out));
    }

    case DomainKind::BgChange: {
      if (ctx.soft.shape != image.shape || ctx.background.shape != image.shape)
        throw std::invalid_argument("apply_domain: context size mismatch");
      Tensor tex = background_texture(height, width, spec.seed);
      std::vector<double> out(static_cast<size_t>(image.size()));
      for (long long i = 0; i < image.size(); ++i) {
        const double blend = 1.0 - ctx.soft.at(i);
        out[static_cast<size_t>(i)] =
            clamp01(image.at(i) + blend * (tex.at(i) - ctx.background.at(i)));
      }
      return Tensor::from(image.shape, std::move(out));
    }
  }
  throw std::invalid_argument("apply_domain: unknown kind");
}

void DatasetSpec::validate() const {
  if (arms.empty()) throw std::invalid_argument("dataset: at least one arm required");
  if (base_true.size() != arms.size() || base_init.size() != arms.size())
    throw std::invalid_argument("dataset: one true and one initial base pose per arm");
  camera.validate();
  for (const auto& arm : arms) arm.validate();
  for (const auto& pose : base_true) pose.validate();
  for (const auto& pose : base_init) pose.validate();
  const int d = total_joints(arms);
  trajectory.validate(d);
  noise.validate(d);
  domain.validate();
  if (!(tool_intensity > 0.0) || !(tool_intensity <= 1.0))
    throw std::invalid_argument("dataset: tool_intensity must be in (0, 1]");
  if (!(tau > 0.0)) throw std::invalid_argument("dataset: tau must be > 0");
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();

  Dataset dataset;
  dataset.spec = spec;
  dataset.scene.camera = spec.camera;
  dataset.scene.arms = spec.arms;
  dataset.scene.base_init = spec.base_init;
  dataset.scene.background = to_intensity(
      quantize(background_texture(spec.camera.height, spec.camera.width, spec.background_seed)));

  auto truth = gen_trajectory(spec.trajectory, spec.arms);
  auto measured = corrupt_measurements(truth, spec.noise);
  auto rendered =
      render_ground_truth(truth, spec.base_true, spec.camera, spec.arms,
                          dataset.scene.background, spec.tool_intensity, spec.tau,
                          spec.render_seed);

  dataset.data.truth_joints = std::move(truth);
  dataset.data.measured = std::move(measured);
  for (auto& frame : rendered) {
    DomainContext ctx{frame.soft, dataset.scene.background, frame.mask};
    dataset.data.frames.push_back(to_intensity(quantize(apply_domain(frame.image, spec.domain,
                                                                     ctx))));
    dataset.data.truth_masks.push_back(std::move(frame.mask));
  }
  return dataset;
}

namespace {

void write_kinematics_csv(const std::filesystem::path& path,
                          const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const int d = rows.empty() ? 0 : static_cast<int>(rows[0].size());
  out << "frame";
  for (int j = 0; j < d; ++j) {
    char name[16];
    std::snprintf(name, sizeof(name), ",q%02d", j);
    out << name;
  }
  out << "\n";
  for (size_t t = 0; t < rows.size(); ++t) {
    out << t;
    for (double v : rows[t]) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<std::vector<double>> read_kinematics_csv(const std::filesystem::path& path, int d) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv " + path.string());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (first) {
        first = false;
        continue;
      }
      row.push_back(std::strtod(cell.c_str(), nullptr));
    }
    if (static_cast<int>(row.size()) != d)
      throw std::runtime_error("csv row width mismatch in " + path.string());
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json pose_json(const BasePose& pose) {
  return nlohmann::json(std::vector<double>(pose.v.begin(), pose.v.end()));
}

BasePose pose_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 6) throw std::runtime_error("base pose in manifest must have 6 entries");
  std::array<double, 6> pose;
  std::copy(v.begin(), v.end(), pose.begin());
  return BasePose::from(pose);
}

std::filesystem::path frame_path(const std::filesystem::path& dir, const char* sub, size_t t) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06zu.pgm", t);
  return dir / sub / name;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "masks");

  for (size_t t = 0; t < dataset.data.frames.size(); ++t) {
    write_pgm(frame_path(dir, "frames", t), quantize(dataset.data.frames[t]));
    write_pgm(frame_path(dir, "masks", t), mask_to_gray(dataset.data.truth_masks[t]));
  }
  write_pgm(dir / "background.pgm", quantize(dataset.scene.background));
  write_kinematics_csv(dir / "kinematics_true.csv", dataset.data.truth_joints);
  write_kinematics_csv(dir / "kinematics_measured.csv", dataset.data.measured);

  const DatasetSpec& spec = dataset.spec;
  nlohmann::json manifest;
  manifest["format"] = "kinefit-dataset-v1";
  manifest["frames"] = dataset.data.frames.size();
  manifest["trajectory"] = {{"length", spec.trajectory.length},
                            {"offsets", spec.trajectory.offsets},
                            {"amplitudes", spec.trajectory.amplitudes},
                            {"freq_min", spec.trajectory.freq_min},
                            {"freq_max", spec.trajectory.freq_max},
                            {"smoothness", spec.trajectory.smoothness},
                            {"seed", spec.trajectory.seed}};
  manifest["noise"] = {{"sigma_white", spec.noise.sigma_white},
                       {"sigma_bias", spec.noise.sigma_bias},
                       {"joint_scale", spec.noise.joint_scale},
                       {"seed", spec.noise.seed}};
  manifest["domain"] = {{"kind", domain_name(spec.domain.kind)},
                        {"brightness", spec.domain.brightness},
                        {"smoke_amplitude", spec.domain.smoke_amplitude},
                        {"bleed_amplitude", spec.domain.bleed_amplitude},
                        {"bleed_count", spec.domain.bleed_count},
                        {"seed", spec.domain.seed}};
  manifest["camera"] = {{"fx", spec.camera.fx},
                        {"fy", spec.camera.fy},
                        {"cx", spec.camera.cx},
                        {"cy", spec.camera.cy},
                        {"width", spec.camera.width},
                        {"height", spec.camera.height},
                        {"world_from_camera",
                         std::vector<double>(spec.camera.world_from_camera.begin(),
                                             spec.camera.world_from_camera.end())}};
  manifest["arms"] = nlohmann::json::array();
  for (const auto& arm : spec.arms) {
    nlohmann::json links = nlohmann::json::array();
    for (const auto& link : arm.links)
      links.push_back({{"a", link.a},
                       {"alpha", link.alpha},
                       {"d_offset", link.d_offset},
                       {"theta_offset", link.theta_offset},
                       {"kind", link.kind == JointKind::Prismatic ? "prismatic" : "revolute"},
                       {"radius", link.radius}});
    manifest["arms"].push_back({{"name", arm.name}, {"jaw", arm.jaw}, {"links", links}});
  }
  manifest["base_true"] = nlohmann::json::array();
  manifest["base_init"] = nlohmann::json::array();
  for (size_t a = 0; a < spec.arms.size(); ++a) {
    manifest["base_true"].push_back(pose_json(spec.base_true[a]));
    manifest["base_init"].push_back(pose_json(spec.base_init[a]));
  }
  manifest["tool_intensity"] = spec.tool_intensity;
  manifest["tau"] = spec.tau;
  manifest["render_seed"] = spec.render_seed;
  manifest["background_seed"] = spec.background_seed;

  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing " + (dir / "manifest.json").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path))
    throw std::runtime_error("no dataset at " + dir.string() + " (missing manifest.json)");

  std::ifstream in(manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad manifest " + manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "kinefit-dataset-v1")
    throw std::runtime_error("unrecognized dataset format in " + manifest_path.string());

  Dataset dataset;
  DatasetSpec& spec = dataset.spec;
  const auto& tj = manifest.at("trajectory");
  spec.trajectory.length = tj.at("length").get<int>();
  spec.trajectory.offsets = tj.at("offsets").get<std::vector<double>>();
  spec.trajectory.amplitudes = tj.at("amplitudes").get<std::vector<double>>();
  spec.trajectory.freq_min = tj.at("freq_min").get<double>();
  spec.trajectory.freq_max = tj.at("freq_max").get<double>();
  spec.trajectory.smoothness = tj.at("smoothness").get<int>();
  spec.trajectory.seed = tj.at("seed").get<uint64_t>();
  const auto& nj = manifest.at("noise");
  spec.noise.sigma_white = nj.at("sigma_white").get<double>();
  spec.noise.sigma_bias = nj.at("sigma_bias").get<double>();
  spec.noise.joint_scale = nj.at("joint_scale").get<std::vector<double>>();
  spec.noise.seed = nj.at("seed").get<uint64_t>();
  const auto& dj = manifest.at("domain");
  spec.domain.kind = domain_from_name(dj.at("kind").get<std::string>());
  spec.domain.brightness = dj.at("brightness").get<double>();
  spec.domain.smoke_amplitude = dj.at("smoke_amplitude").get<double>();
  spec.domain.bleed_amplitude = dj.at("bleed_amplitude").get<double>();
  spec.domain.bleed_count = dj.at("bleed_count").get<int>();
  spec.domain.seed = dj.at("seed").get<uint64_t>();
  const auto& cj = manifest.at("camera");
  spec.camera.fx = cj.at("fx").get<double>();
  spec.camera.fy = cj.at("fy").get<double>();
  spec.camera.cx = cj.at("cx").get<double>();
  spec.camera.cy = cj.at("cy").get<double>();
  spec.camera.width = cj.at("width").get<int>();
  spec.camera.height = cj.at("height").get<int>();
  const auto wfc = cj.at("world_from_camera").get<std::vector<double>>();
  if (wfc.size() != 16)
    throw std::runtime_error("bad camera matrix in " + manifest_path.string());
  std::copy(wfc.begin(), wfc.end(), spec.camera.world_from_camera.begin());
  for (const auto& aj : manifest.at("arms")) {
    ArmModel arm;
    arm.name = aj.at("name").get<std::string>();
    arm.jaw = aj.at("jaw").get<bool>();
    for (const auto& lj : aj.at("links")) {
      DhLink link;
      link.a = lj.at("a").get<double>();
      link.alpha = lj.at("alpha").get<double>();
      link.d_offset = lj.at("d_offset").get<double>();
      link.theta_offset = lj.at("theta_offset").get<double>();
      link.kind = lj.at("kind").get<std::string>() == "prismatic" ? JointKind::Prismatic
                                                                  : JointKind::Revolute;
      link.radius = lj.at("radius").get<double>();
      arm.links.push_back(link);
    }
    spec.arms.push_back(std::move(arm));
  }
  for (const auto& pj : manifest.at("base_true")) spec.base_true.push_back(pose_from_json(pj));
  for (const auto& pj : manifest.at("base_init")) spec.base_init.push_back(pose_from_json(pj));
  spec.tool_intensity = manifest.at("tool_intensity").get<double>();
  spec.tau = manifest.at("tau").get<double>();
  spec.render_seed = manifest.at("render_seed").get<uint64_t>();
  spec.background_seed = manifest.at("background_seed").get<uint64_t>();
  spec.validate();

  dataset.scene.camera = spec.camera;
  dataset.scene.arms = spec.arms;
  dataset.scene.base_init = spec.base_init;
  dataset.scene.background = to_intensity(read_pgm(dir / "background.pgm"));

  const int d = total_joints(spec.arms);
  dataset.data.truth_joints = read_kinematics_csv(dir / "kinematics_true.csv", d);
  dataset.data.measured = read_kinematics_csv(dir / "kinematics_measured.csv", d);

  const size_t frames = manifest.at("frames").get<size_t>();
  if (dataset.data.truth_joints.size() != frames || dataset.data.measured.size() != frames)
    throw std::runtime_error("kinematics row count mismatch in " + dir.string());
  for (size_t t = 0; t < frames; ++t) {
    dataset.data.frames.push_back(to_intensity(read_pgm(frame_path(dir, "frames", t))));
    dataset.data.truth_masks.push_back(gray_to_mask(read_pgm(frame_path(dir, "masks", t))));
  }
  return dataset;
}

DatasetSpec reseed(DatasetSpec spec, uint64_t seed) {
  spec.trajectory.seed = seed * 1000 + 1;
  spec.noise.seed = seed * 1000 + 2;
  spec.render_seed = seed * 1000 + 3;
  spec.domain.seed = seed * 1000 + 4;
  return spec;
}

DatasetSpec benchmark_spec(uint64_t seed) {
  DatasetSpec spec;

  const auto make_arm = [](const std::string& name) {
    ArmModel arm;
    arm.name = name;
    arm.jaw = true;
    const double a[7] = {0.050, 0.045, 0.010, 0.035, 0.030, 0.025, 0.020};
    const double alpha[7] = {0.45, -0.35, 0.25, -0.30, 0.35, -0.25, 0.0};
    const double theta[7] = {0.0, -0.5, 0.2, 0.4, -0.3, 0.25, 0.0};
    const double radius[7] = {0.0065, 0.0060, 0.0055, 0.0050, 0.0045, 0.0040, 0.0030};
    for (int i = 0; i < 7; ++i) {
      DhLink link;
      link.a = a[i];
      link.alpha = alpha[i];
      link.theta_offset = theta[i];
      link.radius = radius[i];
      if (i == 2) {
        link.kind = JointKind::Prismatic;
        link.d_offset = 0.040;
      }
      arm.links.push_back(link);
    }
    return arm;
  };
  spec.arms = {make_arm("psm-left"), make_arm("psm-right")};

  spec.camera.fx = 180;
  spec.camera.fy = 180;
  spec.camera.cx = 80;
  spec.camera.cy = 60;
  spec.camera.width = 160;
  spec.camera.height = 120;

  spec.base_true = {BasePose::from({0.0, 0.5, 0.1, -0.10, 0.03, 0.46}),
                    BasePose::from({0.0, -0.5, -0.1, 0.10, 0.035, 0.47})};
  spec.base_init = {BasePose::from({0.004, 0.497, 0.102, -0.0985, 0.0315, 0.4620}),
                    BasePose::from({-0.003, -0.496, -0.098, 0.1015, 0.0335, 0.4685})};

  spec.trajectory.length = 100;
  spec.trajectory.offsets = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.35,
                             0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.35};
  spec.trajectory.amplitudes = {0.25, 0.20, 0.008, 0.20, 0.20, 0.20, 0.15,
                                0.25, 0.20, 0.008, 0.20, 0.20, 0.20, 0.15};
  spec.trajectory.freq_min = 0.02;
  spec.trajectory.freq_max = 0.1;
  spec.trajectory.smoothness = 3;

  spec.noise.sigma_white = 0.02;
  spec.noise.sigma_bias = 0.005;
  spec.noise.joint_scale = {1.0, 1.0, 0.15, 1.0, 1.0, 1.0, 1.0,
                            1.0, 1.0, 0.15, 1.0, 1.0, 1.0, 1.0};

  spec.tool_intensity = 0.90;
  spec.tau = 0.5;
  spec.background_seed = 99;
  return reseed(spec, seed);
}

}  // namespace kinefit
