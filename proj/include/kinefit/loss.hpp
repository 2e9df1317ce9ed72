#pragma once

#include <map>
#include <mutex>
#include <utility>

#include "kinefit/tensor.hpp"

namespace kinefit {

// Regularization strength for the measurement and temporal penalty terms.
struct RegWeights {
  double lambda1 = 10.0;
  double lambda2 = 1.0;

  void validate() const;
};

// Per-pixel feature stack, shaped [channels, height, width]. Extractors must
// be deterministic and differentiable so gradients reach the rendered image.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int channels() const = 0;
  virtual Tensor extract(const Tensor& image) const = 0;
};

// Fixed filter bank: raw intensity, Gaussian-smoothed intensity, and
// horizontal/vertical central-difference gradients of the smoothed channel.
// Smoothing runs as banded matrix products so it stays on the tape.
class FilterBankExtractor final : public FeatureExtractor {
 public:
  explicit FilterBankExtractor(double sigma = 2.0);

  int channels() const override { return 4; }
  Tensor extract(const Tensor& image) const override;

  // Truncated, border-renormalized 1-D kernel; exposed for verification.
  std::vector<double> kernel() const;

 private:
  struct Bank {
    Tensor blur_rows;    // [h,h], left-multiplies the image
    Tensor blur_cols_t;  // [w,w], right-multiplies (transposed kernel matrix)
    Tensor diff_rows;    // [h,h], vertical central difference
    Tensor diff_cols_t;  // [w,w], horizontal central difference, transposed
  };

  const Bank& bank_for(int height, int width) const;

  double sigma_;
  int radius_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::pair<int, int>, Bank> cache_;
};

// Max-filter of the soft mask over a disc, floored at 0.05 so pixels far from
// the current render keep a small weight.
Tensor attention_map(const Tensor& soft, int dilate_radius);

// Attention-weighted average of (1 - cosine similarity) between per-pixel
// channel vectors: 1 - sum_p attn_p cos_p / sum_p attn_p, in [0, 2].
Tensor acs_loss(const Tensor& f_obs, const Tensor& f_rend, const Tensor& attn);

// lambda1 * mean((k_hat - k_m)^2) + lambda2 * mean((k_hat - k_prev)^2).
Tensor st_regularizer(const Tensor& k_hat, const Tensor& k_m, const Tensor& k_hat_prev,
                      const RegWeights& w);

}  // namespace kinefit
