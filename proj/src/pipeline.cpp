#include "kinefit/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "kinefit/eval.hpp"

namespace kinefit {

int Scene::joint_total() const {
  int total = 0;
  for (const auto& arm : arms) total += arm.joint_count();
  return total;
}

void Scene::validate() const {
  if (arms.empty()) throw std::invalid_argument("scene: needs at least one arm");
  for (const auto& arm : arms) arm.validate();
  camera.validate();
  if (base_init.size() != arms.size())
    throw std::invalid_argument("scene: one base pose per arm required");
  for (const auto& b : base_init) b.validate();
  if (background.shape != Shape{camera.height, camera.width})
    throw std::invalid_argument("scene: background " + shape_str(background.shape) +
                                " does not match the camera image size");
}

void PipelineConfig::validate() const {
  if (k < 0) throw std::invalid_argument("pipeline config: k must be >= 0");
  if (window < 1) throw std::invalid_argument("pipeline config: window must be >= 1");
  if (!(lr_theta > 0.0) || !std::isfinite(lr_theta))
    throw std::invalid_argument("pipeline config: lr_theta must be finite and > 0");
  if (!(lr_base > 0.0) || !std::isfinite(lr_base))
    throw std::invalid_argument("pipeline config: lr_base must be finite and > 0");
  reg.validate();
  if (!(tau > 0.0)) throw std::invalid_argument("pipeline config: tau must be > 0");
  if (dilate_radius < 0)
    throw std::invalid_argument("pipeline config: dilate_radius must be >= 0");
  if (!(tool_intensity >= 0.0 && tool_intensity <= 1.0))
    throw std::invalid_argument("pipeline config: tool_intensity must be in [0, 1]");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("pipeline config: hidden widths must be >= 1");
}

PipelineState init_state(const Scene& scene, const PipelineConfig& cfg) {
  scene.validate();
  cfg.validate();
  const int d = scene.joint_total();
  PipelineState state;
  if (cfg.use_kcn) {
    state.net = CorrectionNet::make(cfg.window, d, cfg.hidden, cfg.init_seed);
    std::vector<std::pair<std::string, long long>> sizes;
    const auto names = state.net.param_names();
    auto params = state.net.params();
    for (size_t i = 0; i < params.size(); ++i) sizes.emplace_back(names[i], params[i]->size());
    state.theta_opt = AdamState::make(sizes);
  } else {
    state.direct_offset.assign(static_cast<size_t>(d), 0.0);
    state.khat_opt = AdamState::make({{"khat", d}});
  }
  std::vector<double> base_flat;
  for (const auto& b : scene.base_init) {
    const auto v = b.as_vector();
    base_flat.insert(base_flat.end(), v.begin(), v.end());
  }
  const int base_len = static_cast<int>(base_flat.size());
  state.base = Tensor::from({base_len}, std::move(base_flat));
  state.base_opt = AdamState::make({{"base", state.base.size()}});
  return state;
}

Tensor measurement_window(const std::vector<std::vector<double>>& measured, int t, int n) {
  if (measured.empty()) throw std::invalid_argument("measurement_window: no measurements");
  if (t < 0 || t >= static_cast<int>(measured.size()))
    throw std::invalid_argument("measurement_window: frame index out of range");
  if (n < 1) throw std::invalid_argument("measurement_window: window must be >= 1");
  const int d = static_cast<int>(measured[0].size());
  std::vector<double> w(static_cast<size_t>(n) * d);
  for (int row = 0; row < n; ++row) {
    const int src = std::max(t - (n - 1) + row, 0);
    const auto& m = measured[static_cast<size_t>(src)];
    if (static_cast<int>(m.size()) != d)
      throw std::invalid_argument("measurement_window: ragged measurement rows");
    std::copy(m.begin(), m.end(), w.begin() + static_cast<size_t>(row) * d);
  }
  return Tensor::from({n, d}, std::move(w));
}

namespace {

std::vector<Segment> scene_segments(const Scene& scene, const Tensor& k_hat, const Tensor& base) {
  std::vector<Segment> segments;
  int offset = 0;
  for (size_t i = 0; i < scene.arms.size(); ++i) {
    const ArmModel& arm = scene.arms[i];
    Tensor joints = slice(k_hat, offset, arm.joint_count());
    Tensor pose = slice(base, static_cast<int>(i) * 6, 6);
    auto part = forward_kinematics(arm, joints, pose);
    segments.insert(segments.end(), part.begin(), part.end());
    offset += arm.joint_count();
  }
  return segments;
}

Tensor frame_loss(const Scene& scene, const FeatureExtractor& features, const Tensor& f_obs,
                  const Tensor& k_hat, const Tensor& base, const Tensor& k_m,
                  const Tensor& k_prev, const PipelineConfig& cfg) {
  auto segments = scene_segments(scene, k_hat, base);
  Tensor soft = soft_silhouette(segments, scene.camera, cfg.tau);
  Tensor hybrid = composite_hybrid(soft, cfg.tool_intensity, scene.background);
  Tensor rendered = features.extract(hybrid);
  Tensor attn = attention_map(soft, cfg.dilate_radius);
  Tensor loss = acs_loss(f_obs, rendered, attn);
  if (cfg.use_reg) loss = add(loss, st_regularizer(k_hat, k_m, k_prev, cfg.reg));
  return loss;
}

}  // namespace

FrameResult optimize_frame(PipelineState& state, const Scene& scene,
                           const FeatureExtractor& features, const Tensor& observed,
                           const Tensor& window, const PipelineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const int d = scene.joint_total();
  if (window.shape.size() != 2 || window.shape[1] != d)
    throw std::invalid_argument("optimize_frame: window " + shape_str(window.shape) +
                                " does not match the scene's " + std::to_string(d) + " joints");

  std::vector<double> k_m_vals(window.values().end() - d, window.values().end());
  Tensor k_m = Tensor::from({d}, k_m_vals);
  if (state.k_hat_prev.empty()) state.k_hat_prev = k_m_vals;
  Tensor k_prev = Tensor::from({d}, state.k_hat_prev);

  Tensor f_obs = features.extract(observed);

  // Directly-optimized correction when no network is in play, warm-started
  // from the carried offset.
  Tensor direct_khat;
  if (!cfg.use_kcn) {
    std::vector<double> init(k_m_vals);
    for (int i = 0; i < d; ++i) init[static_cast<size_t>(i)] += state.direct_offset[static_cast<size_t>(i)];
    direct_khat = Tensor::from({d}, std::move(init));
  }
  auto current_khat = [&]() -> Tensor {
    if (!cfg.use_kcn) return direct_khat;
    BoundNet frozen{state.net.weights, state.net.biases};
    return correction_forward(frozen, window);
  };

  FrameResult result;
  result.frame = state.frame;
  auto record_loss = [&](const Tensor& loss, int iteration) {
    const double v = loss.value();
    if (!std::isfinite(v))
      throw std::runtime_error("frame " + std::to_string(state.frame) + ", iteration " +
                               std::to_string(iteration) + ": non-finite loss");
    result.loss_trace.push_back(v);
  };

  int iteration = 0;
  try {
    for (; iteration < cfg.k; ++iteration) {
      Tape tape;
      Tensor k_hat;
      BoundNet bound;
      Tensor khat_leaf;
      if (cfg.use_kcn) {
        bound = bind(tape, state.net);
        k_hat = correction_forward(bound, window);
      } else {
        khat_leaf = tape.leaf(direct_khat);
        k_hat = khat_leaf;
      }
      Tensor loss = frame_loss(scene, features, f_obs, k_hat, state.base, k_m, k_prev, cfg);
      record_loss(loss, iteration);
      Gradients grads = backward(loss);
      if (cfg.use_kcn) {
        std::vector<Tensor> gs;
        for (size_t l = 0; l < bound.weights.size(); ++l) {
          gs.push_back(grads.at(bound.weights[l]));
          gs.push_back(grads.at(bound.biases[l]));
        }
        adam_step(state.net.params(), gs, state.theta_opt, cfg.lr_theta);
      } else {
        adam_step({&direct_khat}, {grads.at(khat_leaf)}, state.khat_opt, cfg.lr_theta);
      }
    }

    if (cfg.optimize_base) {
      Tape tape;
      Tensor base_leaf = tape.leaf(state.base);
      Tensor k_hat = current_khat();
      Tensor loss = frame_loss(scene, features, f_obs, k_hat, base_leaf, k_m, k_prev, cfg);
      record_loss(loss, iteration);
      Gradients grads = backward(loss);
      adam_step({&state.base}, {grads.at(base_leaf)}, state.base_opt, cfg.lr_base);
    }

    Tensor k_final = current_khat();
    Tensor soft = soft_silhouette(scene_segments(scene, k_final, state.base), scene.camera,
                                  cfg.tau);
    result.mask = threshold_mask(soft);
    result.corrected.assign(k_final.values().begin(), k_final.values().end());
  } catch (const BehindCameraError& e) {
    throw std::runtime_error("frame " + std::to_string(state.frame) + ", iteration " +
                             std::to_string(iteration) + ": point behind camera (depth " +
                             std::to_string(e.depth) + ")");
  }

  state.k_hat_prev = result.corrected;
  if (!cfg.use_kcn)
    for (int i = 0; i < d; ++i)
      state.direct_offset[static_cast<size_t>(i)] =
          result.corrected[static_cast<size_t>(i)] - k_m_vals[static_cast<size_t>(i)];
  state.frame += 1;

  result.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                  .count();
  return result;
}

std::vector<FrameResult> run_sequence(const Scene& scene, const SequenceData& data,
                                      const PipelineConfig& cfg) {
  scene.validate();
  cfg.validate();
  const int d = scene.joint_total();
  const size_t frames = data.frames.size();
  if (frames == 0) throw std::invalid_argument("run_sequence: sequence has no frames");
  if (data.measured.size() != frames)
    throw std::invalid_argument("run_sequence: " + std::to_string(frames) + " frames but " +
                                std::to_string(data.measured.size()) + " measurement rows");
  if (!data.truth_masks.empty() && data.truth_masks.size() != frames)
    throw std::invalid_argument("run_sequence: ground-truth mask count does not match frames");
  if (!data.truth_joints.empty() && data.truth_joints.size() != frames)
    throw std::invalid_argument("run_sequence: ground-truth joint count does not match frames");
  const Shape image_shape{scene.camera.height, scene.camera.width};
  for (const auto& img : data.frames)
    if (img.shape != image_shape)
      throw std::invalid_argument("run_sequence: frame " + shape_str(img.shape) +
                                  " does not match the camera image size");
  for (const auto& row : data.measured)
    if (static_cast<int>(row.size()) != d)
      throw std::invalid_argument("run_sequence: measurement row has wrong joint count");

  FilterBankExtractor features;
  PipelineState state = init_state(scene, cfg);
  std::vector<FrameResult> results;
  results.reserve(frames);
  for (int t = 0; t < static_cast<int>(frames); ++t) {
    if (!cfg.carry_state && t > 0) {
      state = init_state(scene, cfg);
      state.frame = t;
    }
    Tensor window = measurement_window(data.measured, t, cfg.window);
    FrameResult res =
        optimize_frame(state, scene, features, data.frames[static_cast<size_t>(t)], window, cfg);
    if (!data.truth_masks.empty())
      res.dice = dice(res.mask, data.truth_masks[static_cast<size_t>(t)]);
    if (!data.truth_joints.empty()) {
      const auto& truth = data.truth_joints[static_cast<size_t>(t)];
      if (static_cast<int>(truth.size()) != d)
        throw std::invalid_argument("run_sequence: ground-truth joint row has wrong joint count");
      double err_m = 0.0, err_c = 0.0;
      for (int i = 0; i < d; ++i) {
        err_m += std::abs(data.measured[static_cast<size_t>(t)][static_cast<size_t>(i)] -
                          truth[static_cast<size_t>(i)]);
        err_c += std::abs(res.corrected[static_cast<size_t>(i)] - truth[static_cast<size_t>(i)]);
      }
      res.joint_err_meas = err_m / d;
      res.joint_err_corr = err_c / d;
    }
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace kinefit
