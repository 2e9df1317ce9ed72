#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "kinefit/eval.hpp"
#include "kinefit/image_io.hpp"
#include "kinefit/rng.hpp"
#include "kinefit/synth.hpp"

using namespace kinefit;

namespace {

ArmModel simple_arm(int links) {
  ArmModel arm;
  arm.name = "arm";
  for (int i = 0; i < links; ++i) {
    DhLink link;
    link.a = 0.05;
    link.alpha = 0.2 * (i % 2 ? 1 : -1);
    link.theta_offset = 0.3 - 0.2 * i;
    link.radius = 0.01;
    arm.links.push_back(link);
  }
  return arm;
}

DatasetSpec tiny_spec(uint64_t seed) {
  DatasetSpec spec;
  spec.arms = {simple_arm(3)};
  spec.trajectory.length = 6;
  spec.trajectory.offsets = {0.0, 0.1, -0.1};
  spec.trajectory.amplitudes = {0.15, 0.1, 0.1};
  spec.trajectory.seed = seed;
  spec.noise.sigma_white = 0.01;
  spec.noise.sigma_bias = 0.004;
  spec.noise.seed = seed + 1;
  spec.camera.fx = 50;
  spec.camera.fy = 50;
  spec.camera.cx = 16;
  spec.camera.cy = 12;
  spec.camera.width = 32;
  spec.camera.height = 24;
  spec.base_true = {BasePose::from({0, 0.2, 0, -0.05, -0.01, 0.35})};
  spec.base_init = {BasePose::from({0.004, 0.2, 0, -0.049, -0.01, 0.352})};
  spec.render_seed = seed + 2;
  return spec;
}

double mean_abs_diff(const std::vector<std::vector<double>>& a,
                     const std::vector<std::vector<double>>& b) {
  double total = 0.0;
  long long count = 0;
  for (size_t t = 0; t < a.size(); ++t)
    for (size_t j = 0; j < a[t].size(); ++j) {
      total += std::abs(a[t][j] - b[t][j]);
      ++count;
    }
  return total / static_cast<double>(count);
}

}  // namespace

TEST_CASE("zero amplitude freezes the trajectory at the offsets") {
  TrajectorySpec spec;
  spec.length = 8;
  spec.offsets = {0.2, -0.4, 0.0};
  spec.amplitudes = {0.0, 0.0, 0.0};
  auto k = gen_trajectory(spec, {simple_arm(3)});
  REQUIRE(k.size() == 8);
  for (const auto& row : k) {
    REQUIRE(row.size() == 3);
    CHECK(row[0] == 0.2);
    CHECK(row[1] == -0.4);
    CHECK(row[2] == 0.0);
  }

  TrajectorySpec empty = spec;
  empty.offsets.clear();
  empty.amplitudes.clear();
  for (const auto& row : gen_trajectory(empty, {simple_arm(3)}))
    for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("trajectory generation follows the documented draw order") {
  TrajectorySpec spec;
  spec.length = 20;
  spec.offsets = {0.1, -0.2};
  spec.amplitudes = {0.3, 0.25};
  spec.freq_min = 0.03;
  spec.freq_max = 0.11;
  spec.smoothness = 4;
  spec.seed = 42;
  auto k = gen_trajectory(spec, {simple_arm(2)});

  // Independent replay of the contract: per joint, per harmonic, draw
  // amplitude scale, frequency, phase from one stream.
  Rng rng(42);
  for (int j = 0; j < 2; ++j) {
    std::vector<double> amp(4), omega(4), phase(4);
    for (int h = 0; h < 4; ++h) {
      amp[h] = spec.amplitudes[j] * rng.uniform(0.5, 1.0) / spec.smoothness;
      omega[h] = rng.uniform(spec.freq_min, spec.freq_max);
      phase[h] = rng.uniform(0.0, 2.0 * M_PI);
    }
    for (int t = 0; t < 20; ++t) {
      double expect = spec.offsets[j];
      for (int h = 0; h < 4; ++h) expect += amp[h] * std::sin(omega[h] * t + phase[h]);
      CHECK(std::abs(k[t][j] - expect) <= 1e-12);
    }
  }

  auto again = gen_trajectory(spec, {simple_arm(2)});
  CHECK(again == k);
  spec.seed = 43;
  CHECK(gen_trajectory(spec, {simple_arm(2)}) != k);
}

TEST_CASE("frame-to-frame steps respect the analytic derivative bound") {
  TrajectorySpec spec;
  spec.length = 200;
  spec.offsets = {0.0, 0.3, -0.2};
  spec.amplitudes = {0.3, 0.2, 0.1};
  spec.freq_min = 0.02;
  spec.freq_max = 0.12;
  spec.smoothness = 4;
  for (uint64_t seed : {1, 5, 9}) {
    spec.seed = seed;
    auto k = gen_trajectory(spec, {simple_arm(3)});
    for (size_t t = 0; t + 1 < k.size(); ++t)
      for (int j = 0; j < 3; ++j) {
        const double bound = spec.amplitudes[static_cast<size_t>(j)] * spec.freq_max;
        CHECK(std::abs(k[t + 1][j] - k[t][j]) <= bound + 1e-12);
      }
  }
}

TEST_CASE("trajectory validation") {
  TrajectorySpec spec;
  spec.length = 0;
  CHECK_THROWS_AS(gen_trajectory(spec, {simple_arm(2)}), std::invalid_argument);
  spec.length = 5;
  spec.amplitudes = {0.1};
  CHECK_THROWS_AS(gen_trajectory(spec, {simple_arm(2)}), std::invalid_argument);
  spec.amplitudes = {0.1, -0.2};
  CHECK_THROWS_AS(gen_trajectory(spec, {simple_arm(2)}), std::invalid_argument);
  spec.amplitudes = {0.1, 0.2};
  spec.freq_min = 0.2;
  spec.freq_max = 0.1;
  CHECK_THROWS_AS(gen_trajectory(spec, {simple_arm(2)}), std::invalid_argument);
  spec.freq_max = 0.3;
  spec.smoothness = 0;
  CHECK_THROWS_AS(gen_trajectory(spec, {simple_arm(2)}), std::invalid_argument);
}

TEST_CASE("noiseless corruption is the identity and frame zero carries no bias") {
  std::vector<std::vector<double>> truth(5, std::vector<double>{0.1, -0.2, 0.3});
  NoiseSpec spec;
  spec.sigma_white = 0.0;
  spec.sigma_bias = 0.0;
  CHECK(corrupt_measurements(truth, spec) == truth);

  spec.sigma_bias = 0.02;  // walk only: frame 0 must still be exact
  auto measured = corrupt_measurements(truth, spec);
  CHECK(measured[0] == truth[0]);
  bool later_differs = false;
  for (size_t t = 1; t < measured.size(); ++t)
    if (measured[t] != truth[t]) later_differs = true;
  CHECK(later_differs);
}

TEST_CASE("white noise sample statistics match the requested sigma") {
  const int frames = 10000, d = 10;
  std::vector<std::vector<double>> truth(frames, std::vector<double>(d, 0.0));
  NoiseSpec spec;
  spec.sigma_white = 0.02;
  spec.sigma_bias = 0.0;
  spec.seed = 7;
  auto measured = corrupt_measurements(truth, spec);

  double sum = 0.0, sum_sq = 0.0;
  const double count = frames * d;
  for (const auto& row : measured)
    for (double v : row) {
      sum += v;
      sum_sq += v * v;
    }
  const double mean = sum / count;
  const double sd = std::sqrt(sum_sq / count - mean * mean);
  CHECK(std::abs(mean) <= 3.0 * 0.02 / std::sqrt(count));
  CHECK(std::abs(sd - 0.02) <= 0.02 * 0.01);
}

TEST_CASE("bias path variance grows linearly with time") {
  const int t_probe = 20;
  std::vector<std::vector<double>> truth(t_probe + 1, std::vector<double>{0.0});
  NoiseSpec spec;
  spec.sigma_white = 0.0;
  spec.sigma_bias = 0.01;

  const int runs = 4000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < runs; ++i) {
    spec.seed = 1000 + static_cast<uint64_t>(i);
    const double b = corrupt_measurements(truth, spec)[t_probe][0];
    sum += b;
    sum_sq += b * b;
  }
  const double mean = sum / runs;
  const double var = sum_sq / runs - mean * mean;
  const double expected = t_probe * 0.01 * 0.01;
  CHECK(std::abs(var - expected) <= 0.10 * expected);
}

TEST_CASE("per-joint scales silence and shape the noise") {
  std::vector<std::vector<double>> truth(50, std::vector<double>{0.0, 0.0});
  NoiseSpec spec;
  spec.sigma_white = 0.05;
  spec.sigma_bias = 0.01;
  spec.joint_scale = {1.0, 0.0};
  auto measured = corrupt_measurements(truth, spec);
  bool joint0_noisy = false;
  for (size_t t = 0; t < measured.size(); ++t) {
    if (measured[t][0] != 0.0) joint0_noisy = true;
    CHECK(measured[t][1] == 0.0);
  }
  CHECK(joint0_noisy);

  NoiseSpec bad = spec;
  bad.joint_scale = {1.0};
  CHECK_THROWS_AS(corrupt_measurements(truth, bad), std::invalid_argument);
  bad.joint_scale.clear();
  bad.sigma_white = -0.1;
  CHECK_THROWS_AS(corrupt_measurements(truth, bad), std::invalid_argument);
}

TEST_CASE("value noise is deterministic, bounded, and coarse") {
  Tensor a = value_noise(24, 32, 3, 4, 5);
  Tensor b = value_noise(24, 32, 3, 4, 5);
  CHECK(a.values() == b.values());
  CHECK(a.shape == Shape{24, 32});
  for (double v : a.values()) {
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
  // Bilinear upsampling keeps neighbour pixels close: one cell spans eight
  // pixels, so a single step moves at most an eighth of the value range.
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x + 1 < 32; ++x)
      CHECK(std::abs(a.at(y * 32 + x + 1) - a.at(y * 32 + x)) <= 1.0 / 8.0 + 1e-12);
  CHECK(value_noise(24, 32, 3, 4, 6).values() != a.values());
}

TEST_CASE("ground-truth rendering matches a direct render of the truth") {
  DatasetSpec spec = tiny_spec(3);
  auto truth = gen_trajectory(spec.trajectory, spec.arms);
  Tensor background = background_texture(24, 32, 11);
  auto rendered = render_ground_truth(truth, spec.base_true, spec.camera, spec.arms, background,
                                      0.85, 1.5, 21);
  REQUIRE(rendered.size() == truth.size());

  Tensor base = Tensor::from({6}, spec.base_true[0].as_vector());
  for (size_t t = 0; t < rendered.size(); ++t) {
    Tensor joints = Tensor::from({3}, truth[t]);
    Tensor soft =
        soft_silhouette(forward_kinematics(spec.arms[0], joints, base), spec.camera, 1.5);
    CHECK(rendered[t].soft.values() == soft.values());
    CHECK(rendered[t].mask.on == threshold_mask(soft).on);

    Tensor clean = composite_hybrid(soft, 0.85, background);
    double noise_sum = 0.0, noise_sq = 0.0;
    for (long long i = 0; i < clean.size(); ++i) {
      const double v = rendered[t].image.at(i);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      const double nv = v - clean.at(i);
      noise_sum += nv;
      noise_sq += nv * nv;
    }
    const double count = static_cast<double>(clean.size());
    const double mean = noise_sum / count;
    const double sd = std::sqrt(noise_sq / count - mean * mean);
    CHECK(std::abs(mean) <= 0.002);
    CHECK(sd >= 0.005);
    CHECK(sd <= 0.02);
  }

  auto again = render_ground_truth(truth, spec.base_true, spec.camera, spec.arms, background,
                                   0.85, 1.5, 21);
  for (size_t t = 0; t < rendered.size(); ++t)
    CHECK(again[t].image.values() == rendered[t].image.values());

  // Smooth trajectories keep the silhouette area smooth too.
  double mean_count = 0.0;
  for (const auto& frame : rendered) mean_count += static_cast<double>(frame.mask.count());
  mean_count /= static_cast<double>(rendered.size());
  CHECK(mean_count > 0.0);
  for (size_t t = 0; t + 1 < rendered.size(); ++t) {
    const double delta =
        std::abs(static_cast<double>(rendered[t + 1].mask.count() - rendered[t].mask.count()));
    CHECK(delta <= 0.25 * mean_count);
  }
}

TEST_CASE("domain corruptions touch only what they claim to touch") {
  DatasetSpec spec = tiny_spec(5);
  auto truth = gen_trajectory(spec.trajectory, spec.arms);
  Tensor background = background_texture(24, 32, 11);
  auto rendered = render_ground_truth(truth, spec.base_true, spec.camera, spec.arms, background,
                                      0.85, 1.5, 23);
  const Tensor& image = rendered[0].image;
  DomainContext ctx{rendered[0].soft, background, rendered[0].mask};

  DomainSpec domain;
  domain.kind = DomainKind::Regular;
  CHECK(apply_domain(image, domain, ctx).values() == image.values());

  domain.kind = DomainKind::LowBrightness;
  Tensor flat = Tensor::full({24, 32}, 0.5);
  Tensor dim = apply_domain(flat, domain, ctx);
  for (double v : dim.values()) CHECK(v == 0.5 * 0.4);
  Tensor dim_real = apply_domain(image, domain, ctx);
  for (long long i = 0; i < image.size(); ++i)
    CHECK(dim_real.at(i) == doctest::Approx(image.at(i) * 0.4).epsilon(1e-12));

  domain.kind = DomainKind::Smoke;
  domain.smoke_amplitude = 0.0;
  CHECK(apply_domain(image, domain, ctx).values() == image.values());
  domain.smoke_amplitude = 0.35;
  Tensor hazy = apply_domain(image, domain, ctx);
  bool brightened = false;
  for (long long i = 0; i < image.size(); ++i) {
    CHECK(hazy.at(i) >= image.at(i) - 1e-12);
    CHECK(hazy.at(i) <= 1.0);
    if (hazy.at(i) > image.at(i) + 0.05) brightened = true;
  }
  CHECK(brightened);

  domain.kind = DomainKind::Bleeding;
  Tensor bled = apply_domain(image, domain, ctx);
  bool darkened = false;
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 32; ++x) {
      const long long i = y * 32 + x;
      if (rendered[0].mask.at(y, x)) {
        CHECK(bled.at(i) == image.at(i));
      } else {
        CHECK(bled.at(i) <= image.at(i) + 1e-12);
        CHECK(bled.at(i) >= 0.0);
        if (bled.at(i) < image.at(i) - 0.1) darkened = true;
      }
    }
  CHECK(darkened);

  domain.kind = DomainKind::BgChange;
  Tensor swapped = apply_domain(image, domain, ctx);
  double tool_shift = 0.0, bg_shift = 0.0;
  long long best = 0;
  for (long long i = 1; i < image.size(); ++i)
    if (rendered[0].soft.at(i) > rendered[0].soft.at(best)) best = i;
  tool_shift = std::abs(swapped.at(best) - image.at(best));
  for (long long i = 0; i < image.size(); ++i)
    bg_shift = std::max(bg_shift, std::abs(swapped.at(i) - image.at(i)));
  CHECK(tool_shift < 0.02);
  CHECK(bg_shift > 0.05);

  DomainSpec bad;
  bad.brightness = 0.0;
  CHECK_THROWS_AS(apply_domain(image, bad, ctx), std::invalid_argument);
  bad = DomainSpec{};
  bad.smoke_amplitude = -0.1;
  CHECK_THROWS_AS(apply_domain(image, bad, ctx), std::invalid_argument);
  bad = DomainSpec{};
  bad.bleed_count = -1;
  CHECK_THROWS_AS(apply_domain(image, bad, ctx), std::invalid_argument);
}

TEST_CASE("domain names round-trip and reject unknowns") {
  for (DomainKind kind : {DomainKind::Regular, DomainKind::LowBrightness, DomainKind::Smoke,
                          DomainKind::Bleeding, DomainKind::BgChange})
    CHECK(domain_from_name(domain_name(kind)) == kind);
  CHECK_THROWS_AS(domain_from_name("fog"), std::invalid_argument);
}

TEST_CASE("masks are identical across every domain variant") {
  DatasetSpec spec = tiny_spec(7);
  Dataset regular = generate_dataset(spec);
  for (DomainKind kind : {DomainKind::LowBrightness, DomainKind::Smoke, DomainKind::Bleeding,
                          DomainKind::BgChange}) {
    DatasetSpec variant = spec;
    variant.domain.kind = kind;
    variant.domain.seed = 31;
    Dataset corrupted = generate_dataset(variant);
    REQUIRE(corrupted.data.truth_masks.size() == regular.data.truth_masks.size());
    for (size_t t = 0; t < regular.data.truth_masks.size(); ++t) {
      CHECK(corrupted.data.truth_masks[t].on == regular.data.truth_masks[t].on);
      CHECK(corrupted.data.measured[t] == regular.data.measured[t]);
      CHECK(corrupted.data.truth_joints[t] == regular.data.truth_joints[t]);
    }
  }
}

TEST_CASE("generated frames live on the 8-bit grid") {
  Dataset dataset = generate_dataset(tiny_spec(9));
  for (const auto& frame : dataset.data.frames)
    for (double v : frame.values()) {
      const double scaled = v * 255.0;
      CHECK(std::abs(scaled - std::round(scaled)) <= 1e-9);
    }
  for (double v : dataset.scene.background.values()) {
    const double scaled = v * 255.0;
    CHECK(std::abs(scaled - std::round(scaled)) <= 1e-9);
  }
}

TEST_CASE("datasets survive a save and load round trip bit-exactly") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "kinefit_synth_roundtrip";
  fs::remove_all(dir);

  DatasetSpec spec = tiny_spec(13);
  spec.domain.kind = DomainKind::Smoke;
  spec.domain.seed = 17;
  Dataset dataset = generate_dataset(spec);
  save_dataset(dataset, dir);

  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "background.pgm"));
  CHECK(fs::exists(dir / "kinematics_true.csv"));
  CHECK(fs::exists(dir / "kinematics_measured.csv"));
  CHECK(fs::exists(dir / "frames" / "000000.pgm"));
  CHECK(fs::exists(dir / "masks" / "000005.pgm"));

  Dataset loaded = load_dataset(dir);
  CHECK(loaded.spec.trajectory.seed == spec.trajectory.seed);
  CHECK(loaded.spec.domain.kind == DomainKind::Smoke);
  CHECK(loaded.spec.tool_intensity == spec.tool_intensity);
  CHECK(loaded.scene.camera.fx == spec.camera.fx);
  CHECK(loaded.scene.camera.world_from_camera == spec.camera.world_from_camera);
  REQUIRE(loaded.scene.arms.size() == 1);
  CHECK(loaded.scene.arms[0].links.size() == 3);
  CHECK(loaded.scene.arms[0].links[1].alpha == spec.arms[0].links[1].alpha);
  CHECK(loaded.scene.arms[0].links[1].radius == spec.arms[0].links[1].radius);
  CHECK(loaded.scene.base_init[0].v == spec.base_init[0].v);
  CHECK(loaded.spec.base_true[0].v == spec.base_true[0].v);

  REQUIRE(loaded.data.frames.size() == dataset.data.frames.size());
  for (size_t t = 0; t < dataset.data.frames.size(); ++t) {
    CHECK(loaded.data.frames[t].values() == dataset.data.frames[t].values());
    CHECK(loaded.data.truth_masks[t].on == dataset.data.truth_masks[t].on);
    CHECK(loaded.data.measured[t] == dataset.data.measured[t]);
    CHECK(loaded.data.truth_joints[t] == dataset.data.truth_joints[t]);
  }
  CHECK(loaded.scene.background.values() == dataset.scene.background.values());

  // Regenerating from the loaded spec reproduces the dataset exactly.
  Dataset regen = generate_dataset(loaded.spec);
  for (size_t t = 0; t < dataset.data.frames.size(); ++t)
    CHECK(regen.data.frames[t].values() == dataset.data.frames[t].values());

  CHECK_THROWS_AS(load_dataset(dir / "missing"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("the standard benchmark stays inside the measurement-error envelope") {
  for (uint64_t seed : {1, 2, 3}) {
    DatasetSpec spec = benchmark_spec(seed);
    spec.validate();
    CHECK(spec.trajectory.length == 100);
    CHECK(spec.camera.width == 160);
    CHECK(spec.camera.height == 120);
    CHECK(spec.noise.sigma_white == 0.02);
    CHECK(spec.noise.sigma_bias == 0.005);
    REQUIRE(spec.arms.size() == 2);
    int d = 0;
    for (const auto& arm : spec.arms) {
      CHECK(arm.joint_count() == 7);
      d += arm.joint_count();
    }
    CHECK(d == 14);

    auto truth = gen_trajectory(spec.trajectory, spec.arms);
    auto measured = corrupt_measurements(truth, spec.noise);
    const double err = mean_abs_diff(measured, truth);
    CHECK(err >= 0.015);
    CHECK(err <= 0.08);
  }

  // Prismatic joints carry the reduced noise scale.
  DatasetSpec spec = benchmark_spec(1);
  int joint = 0;
  for (const auto& arm : spec.arms)
    for (const auto& link : arm.links) {
      if (link.kind == JointKind::Prismatic)
        CHECK(spec.noise.joint_scale[static_cast<size_t>(joint)] == 0.15);
      else
        CHECK(spec.noise.joint_scale[static_cast<size_t>(joint)] == 1.0);
      ++joint;
    }
}

TEST_CASE("benchmark frames keep both tools visible") {
  DatasetSpec spec = benchmark_spec(2);
  spec.trajectory.length = 4;
  Dataset dataset = generate_dataset(spec);
  for (const auto& mask : dataset.data.truth_masks) {
    const double frac =
        static_cast<double>(mask.count()) / static_cast<double>(mask.width * mask.height);
    CHECK(frac >= 0.03);
    CHECK(frac <= 0.45);
  }
}
