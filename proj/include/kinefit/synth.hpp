#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kinefit/pipeline.hpp"

namespace kinefit {

// How every joint moves over the sequence: a seeded sum of sinusoids per
// joint around a fixed offset. Draw order (one Rng(seed) stream): for each
// joint, for each harmonic: amplitude scale U(0.5,1), angular frequency
// U(freq_min, freq_max), phase U(0, 2pi). The harmonic amplitude is
// amplitude[j] * scale / smoothness, so the sum stays within amplitude[j].
struct TrajectorySpec {
  int length = 100;
  std::vector<double> offsets;     // per joint; empty means all zero
  std::vector<double> amplitudes;  // per joint, >= 0; empty means all zero
  double freq_min = 0.02;          // radians per frame
  double freq_max = 0.1;
  int smoothness = 3;  // sinusoids summed per joint
  uint64_t seed = 1;

  void validate(int d) const;
};

// Additive measurement corruption: a bias random walk (zero at frame 0)
// plus fresh white noise. Draw order (one Rng(seed) stream): for each frame
// after the first, for each joint: walk increment, then white sample; frame
// 0 draws white samples only. joint_scale multiplies both sigmas per joint.
struct NoiseSpec {
  double sigma_white = 0.02;  // radians
  double sigma_bias = 0.005;  // radians per frame of drift
  std::vector<double> joint_scale;  // per joint; empty means all one
  uint64_t seed = 1;

  void validate(int d) const;
};

enum class DomainKind { Regular, LowBrightness, Smoke, Bleeding, BgChange };

const char* domain_name(DomainKind kind);
DomainKind domain_from_name(const std::string& name);

struct DomainSpec {
  DomainKind kind = DomainKind::Regular;
  double brightness = 0.4;       // low-brightness multiplier, in (0, 1]
  double smoke_amplitude = 0.35;  // haze strength, >= 0
  double bleed_amplitude = -0.5;  // intensity shift inside blotches
  int bleed_count = 6;            // number of blotches, >= 0
  uint64_t seed = 1;

  void validate() const;
};

// Coarse seeded lattice noise bilinearly upsampled to height x width,
// values in [0, 1). Lattice values are drawn row-major from Rng(seed).
Tensor value_noise(int height, int width, int cells_y, int cells_x, uint64_t seed);

// Tissue-like mid-gray texture in [0.30, 0.65], two noise octaves.
Tensor background_texture(int height, int width, uint64_t seed);

// True joint trajectories, one row per frame, one column per joint across
// all arms in order.
std::vector<std::vector<double>> gen_trajectory(const TrajectorySpec& spec,
                                                const std::vector<ArmModel>& arms);

// Measured kinematics: truth plus bias walk plus white noise.
std::vector<std::vector<double>> corrupt_measurements(
    const std::vector<std::vector<double>>& truth, const NoiseSpec& spec);

struct RenderedFrame {
  Tensor image;  // hybrid composite plus sensor noise, in [0, 1]
  Tensor soft;   // soft silhouette at the true kinematics
  BinaryMask mask;
};

// Renders every frame at the true kinematics. Sensor noise is N(0, 0.01)
// per pixel from an independent per-frame stream derived from seed.
std::vector<RenderedFrame> render_ground_truth(const std::vector<std::vector<double>>& truth,
                                               const std::vector<BasePose>& base_true,
                                               const Camera& camera,
                                               const std::vector<ArmModel>& arms,
                                               const Tensor& background, double tool_intensity,
                                               double tau, uint64_t seed);

// Scene pieces a corruption may consult: the soft silhouette and binary
// mask of the frame (tool pixels stay intact) and the clean background.
struct DomainContext {
  const Tensor& soft;
  const Tensor& background;
  const BinaryMask& mask;
};

Tensor apply_domain(const Tensor& image, const DomainSpec& spec, const DomainContext& ctx);

// Everything needed to generate one dataset instance.
struct DatasetSpec {
  TrajectorySpec trajectory;
  NoiseSpec noise;
  DomainSpec domain;
  Camera camera;
  std::vector<ArmModel> arms;
  std::vector<BasePose> base_true;
  std::vector<BasePose> base_init;  // starting estimate handed to the pipeline
  double tool_intensity = 0.85;
  double tau = 1.5;
  uint64_t render_seed = 1;      // sensor noise stream
  uint64_t background_seed = 99;  // background texture

  void validate() const;
};

struct Dataset {
  DatasetSpec spec;
  Scene scene;        // camera, arms, base_init, stored background
  SequenceData data;  // final frames, measured, truth masks, truth joints
};

// Pure function of the spec. Frames and the background are quantized to the
// 8-bit grid so on-disk and in-memory copies are identical.
Dataset generate_dataset(const DatasetSpec& spec);

// Layout: frames/NNNNNN.pgm, masks/NNNNNN.pgm, background.pgm,
// kinematics_true.csv, kinematics_measured.csv, manifest.json.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Re-derives the trajectory, noise, render, and domain sub-seeds from one
// master seed (seed*1000 + 1..4), leaving the scene untouched.
DatasetSpec reseed(DatasetSpec spec, uint64_t seed);

// The standard benchmark: 100 frames at 160x120, two seven-value arms
// (six joints plus jaw), sigma_w 0.02, sigma_b 0.005. The seed drives the
// trajectory, noise, and sensor streams; the scene itself is fixed.
DatasetSpec benchmark_spec(uint64_t seed);

}  // namespace kinefit
