#include "kinefit/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace kinefit {

void RegWeights::validate() const {
  if (!(lambda1 >= 0.0) || !std::isfinite(lambda1))
    throw std::invalid_argument("reg weights: lambda1 must be finite and >= 0");
  if (!(lambda2 >= 0.0) || !std::isfinite(lambda2))
    throw std::invalid_argument("reg weights: lambda2 must be finite and >= 0");
}

FilterBankExtractor::FilterBankExtractor(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("filter bank: sigma must be finite and > 0");
  radius_ = static_cast<int>(std::ceil(3.0 * sigma));
}

std::vector<double> FilterBankExtractor::kernel() const {
  std::vector<double> taps(static_cast<size_t>(2 * radius_ + 1));
  double total = 0.0;
  for (int i = -radius_; i <= radius_; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma_ * sigma_));
    taps[static_cast<size_t>(i + radius_)] = v;
    total += v;
  }
  for (double& v : taps) v /= total;
  return taps;
}

namespace {

// [n,n] smoothing matrix; rows truncated at the borders are renormalized so
// every row sums to one and constants stay constant.
Tensor blur_matrix(int n, const std::vector<double>& taps, int radius, bool transposed) {
  std::vector<double> m(static_cast<size_t>(n) * n, 0.0);
  for (int row = 0; row < n; ++row) {
    double rowsum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      const int col = row + i;
      if (col < 0 || col >= n) continue;
      rowsum += taps[static_cast<size_t>(i + radius)];
    }
    for (int i = -radius; i <= radius; ++i) {
      const int col = row + i;
      if (col < 0 || col >= n) continue;
      const double w = taps[static_cast<size_t>(i + radius)] / rowsum;
      if (transposed)
        m[static_cast<size_t>(col) * n + row] = w;
      else
        m[static_cast<size_t>(row) * n + col] = w;
    }
  }
  return Tensor::from({n, n}, std::move(m));
}

// [n,n] central difference, one-sided halves at the borders.
Tensor diff_matrix(int n, bool transposed) {
  std::vector<double> m(static_cast<size_t>(n) * n, 0.0);
  for (int row = 0; row < n; ++row) {
    const int hi = std::min(row + 1, n - 1);
    const int lo = std::max(row - 1, 0);
    if (transposed) {
      m[static_cast<size_t>(hi) * n + row] += 0.5;
      m[static_cast<size_t>(lo) * n + row] -= 0.5;
    } else {
      m[static_cast<size_t>(row) * n + hi] += 0.5;
      m[static_cast<size_t>(row) * n + lo] -= 0.5;
    }
  }
  return Tensor::from({n, n}, std::move(m));
}

}  // namespace

const FilterBankExtractor::Bank& FilterBankExtractor::bank_for(int height, int width) const {
  std::lock_guard<std::mutex> lock(cache_mutex_);
  const auto key = std::make_pair(height, width);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  const std::vector<double> taps = kernel();
  Bank bank{
      blur_matrix(height, taps, radius_, false),
      blur_matrix(width, taps, radius_, true),
      diff_matrix(height, false),
      diff_matrix(width, true),
  };
  return cache_.emplace(key, std::move(bank)).first->second;
}

Tensor FilterBankExtractor::extract(const Tensor& image) const {
  if (image.shape.size() != 2)
    throw std::invalid_argument("filter bank: image must be 2-D, got " + shape_str(image.shape));
  const int h = image.shape[0];
  const int w = image.shape[1];
  const Bank& bank = bank_for(h, w);
  Tensor smooth = matmul(bank.blur_rows, matmul(image, bank.blur_cols_t));
  Tensor gx = matmul(smooth, bank.diff_cols_t);
  Tensor gy = matmul(bank.diff_rows, smooth);
  Tensor parts[] = {image, smooth, gx, gy};
  return reshape(concat(parts), {4, h, w});
}

Tensor attention_map(const Tensor& soft, int dilate_radius) {
  if (soft.shape.size() != 2)
    throw std::invalid_argument("attention_map: soft mask must be 2-D, got " +
                                shape_str(soft.shape));
  if (dilate_radius < 0)
    throw std::invalid_argument("attention_map: dilate radius must be >= 0");
  return max_const(maxfilter_disc(soft, dilate_radius), 0.05);
}

Tensor acs_loss(const Tensor& f_obs, const Tensor& f_rend, const Tensor& attn) {
  if (f_obs.shape != f_rend.shape)
    throw std::invalid_argument("acs_loss: feature shapes differ, " + shape_str(f_obs.shape) +
                                " vs " + shape_str(f_rend.shape));
  if (f_obs.shape.size() != 3)
    throw std::invalid_argument("acs_loss: features must be [channels, height, width], got " +
                                shape_str(f_obs.shape));
  if (attn.shape.size() != 2 || attn.shape[0] != f_obs.shape[1] || attn.shape[1] != f_obs.shape[2])
    throw std::invalid_argument("acs_loss: attention shape " + shape_str(attn.shape) +
                                " does not match features " + shape_str(f_obs.shape));
  double attn_total = 0.0;
  for (double v : attn.values()) {
    if (v < 0.0) throw std::invalid_argument("acs_loss: attention weights must be >= 0");
    attn_total += v;
  }
  if (!(attn_total > 0.0))
    throw std::invalid_argument("acs_loss: attention must be positive somewhere");

  const int c = f_obs.shape[0];
  const int hw = f_obs.shape[1] * f_obs.shape[2];
  Tensor dot, obs_sq, rend_sq;
  for (int i = 0; i < c; ++i) {
    Tensor fo = slice(f_obs, i * hw, hw);
    Tensor fr = slice(f_rend, i * hw, hw);
    if (i == 0) {
      dot = mul(fo, fr);
      obs_sq = square(fo);
      rend_sq = square(fr);
    } else {
      dot = add(dot, mul(fo, fr));
      obs_sq = add(obs_sq, square(fo));
      rend_sq = add(rend_sq, square(fr));
    }
  }
  const Tensor eps = Tensor::scalar(1e-16);
  Tensor denom = mul(sqrt(add(obs_sq, eps)), sqrt(add(rend_sq, eps)));
  Tensor cosim = div(dot, denom);
  Tensor weighted = mul(reshape(attn, {hw}), cosim);
  return sub(Tensor::scalar(1.0), div(sum(weighted), sum(attn)));
}

Tensor st_regularizer(const Tensor& k_hat, const Tensor& k_m, const Tensor& k_hat_prev,
                      const RegWeights& w) {
  w.validate();
  if (k_hat.size() != k_m.size() || k_hat.size() != k_hat_prev.size())
    throw std::invalid_argument("st_regularizer: vector lengths differ");
  Tensor measurement = mean(square(sub(k_hat, k_m)));
  Tensor temporal = mean(square(sub(k_hat, k_hat_prev)));
  return add(mul(Tensor::scalar(w.lambda1), measurement),
             mul(Tensor::scalar(w.lambda2), temporal));
}

}  // namespace kinefit
