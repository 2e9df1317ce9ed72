#pragma once

#include <cstdint>
#include <vector>

#include "kinefit/correction.hpp"
#include "kinefit/kinematics.hpp"
#include "kinefit/loss.hpp"
#include "kinefit/render.hpp"

namespace kinefit {

// Everything about the world that stays fixed over a sequence.
struct Scene {
  std::vector<ArmModel> arms;
  Camera camera;
  Tensor background;                // [h, w] intensities in [0, 1]
  std::vector<BasePose> base_init;  // starting estimate, one per arm

  int joint_total() const;
  void validate() const;
};

// One recorded sequence: observed images with aligned measured kinematics,
// plus ground truth when it is known (synthetic data).
struct SequenceData {
  std::vector<Tensor> frames;                     // [h, w] each
  std::vector<std::vector<double>> measured;      // per frame, d joint values
  std::vector<BinaryMask> truth_masks;            // empty if unknown
  std::vector<std::vector<double>> truth_joints;  // empty if unknown
};

struct PipelineConfig {
  int k = 5;       // correction iterations per frame
  int window = 5;  // measurement window length n
  double lr_theta = 5e-5;
  double lr_base = 3e-6;
  RegWeights reg;
  double tau = 1.5;
  int dilate_radius = 6;
  double tool_intensity = 0.85;
  bool use_kcn = true;
  bool use_reg = true;
  bool optimize_base = true;
  bool carry_state = true;
  uint64_t init_seed = 7;
  std::vector<int> hidden{32, 64, 128, 128, 64, 32};

  void validate() const;
};

struct FrameResult {
  int frame = 0;
  std::vector<double> corrected;   // final K-hat for the frame
  BinaryMask mask;                 // render of the final K-hat, thresholded
  std::vector<double> loss_trace;  // one entry per iteration, k (+1 with base step)
  double dice = -1.0;              // vs ground truth; -1 when unknown
  double joint_err_meas = -1.0;    // mean per-joint |K_m - K_true|; -1 unknown
  double joint_err_corr = -1.0;    // mean per-joint |K-hat - K_true|; -1 unknown
  double ms = 0.0;
};

// Mutable optimization state threaded through a sequence run.
struct PipelineState {
  CorrectionNet net;                  // when use_kcn
  AdamState theta_opt;
  std::vector<double> direct_offset;  // when !use_kcn: carried correction
  AdamState khat_opt;
  Tensor base;                        // flat [6 * arms]
  AdamState base_opt;
  std::vector<double> k_hat_prev;     // previous corrected frame
  int frame = 0;
};

PipelineState init_state(const Scene& scene, const PipelineConfig& cfg);

// Measurement window ending at frame t, replicate-padded with frame 0 while
// the sequence is shorter than n. Shape [n, d].
Tensor measurement_window(const std::vector<std::vector<double>>& measured, int t, int n);

// One frame of the alternating optimization: k correction steps, then one
// base step with the correction frozen, then the final render.
FrameResult optimize_frame(PipelineState& state, const Scene& scene,
                           const FeatureExtractor& features, const Tensor& observed,
                           const Tensor& window, const PipelineConfig& cfg);

// Serial run over all frames; fills Dice and joint errors where ground truth
// is present. With carry_state=false the state resets before every frame.
std::vector<FrameResult> run_sequence(const Scene& scene, const SequenceData& data,
                                      const PipelineConfig& cfg);

}  // namespace kinefit
