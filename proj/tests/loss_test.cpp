#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <thread>
#include <vector>

#include "kinefit/gradcheck.hpp"
#include "kinefit/loss.hpp"
#include "kinefit/rng.hpp"

using namespace kinefit;

namespace {

// Direct truncated-and-renormalized separable convolution, the oracle for
// the band-matrix smoothing channel.
double blur_oracle(const std::vector<double>& img, int h, int w, const std::vector<double>& taps,
                   int radius, int y, int x) {
  double out = 0.0;
  double wy_sum = 0.0, wx_sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    if (y + i >= 0 && y + i < h) wy_sum += taps[static_cast<size_t>(i + radius)];
    if (x + i >= 0 && x + i < w) wx_sum += taps[static_cast<size_t>(i + radius)];
  }
  for (int i = -radius; i <= radius; ++i) {
    const int yy = y + i;
    if (yy < 0 || yy >= h) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int xx = x + j;
      if (xx < 0 || xx >= w) continue;
      out += taps[static_cast<size_t>(i + radius)] / wy_sum *
             (taps[static_cast<size_t>(j + radius)] / wx_sum) *
             img[static_cast<size_t>(yy) * w + xx];
    }
  }
  return out;
}

std::vector<double> channel(const Tensor& f, int c) {
  const int hw = f.shape[1] * f.shape[2];
  std::vector<double> out(static_cast<size_t>(hw));
  for (int i = 0; i < hw; ++i) out[static_cast<size_t>(i)] = f.at(c * hw + i);
  return out;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(static_cast<size_t>(numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("smoothing kernel is normalized and symmetric") {
  FilterBankExtractor fb;
  auto taps = fb.kernel();
  REQUIRE(taps.size() == 13);  // radius ceil(3*sigma) = 6
  double total = 0.0;
  for (double t : taps) total += t;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  for (size_t i = 0; i < taps.size(); ++i) CHECK(taps[i] == taps[taps.size() - 1 - i]);
  CHECK(taps[6] > taps[5]);
  CHECK(taps[5] > taps[0]);
}

TEST_CASE("smoothed channel matches direct convolution") {
  Rng rng(21);
  const int h = 14, w = 11;  // width below the kernel span stresses truncation
  std::vector<double> img(static_cast<size_t>(h) * w);
  for (auto& v : img) v = rng.uniform(0.0, 1.0);

  FilterBankExtractor fb;
  Tensor f = fb.extract(Tensor::from({h, w}, img));
  REQUIRE(f.shape == Shape{4, h, w});
  auto smooth = channel(f, 1);
  auto taps = fb.kernel();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      CHECK(smooth[static_cast<size_t>(y) * w + x] ==
            doctest::Approx(blur_oracle(img, h, w, taps, 6, y, x)).epsilon(1e-12));

  // Raw channel passes the input through untouched.
  auto raw = channel(f, 0);
  for (size_t i = 0; i < img.size(); ++i) CHECK(raw[i] == img[i]);
}

TEST_CASE("constant image has flat smoothing and vanishing gradients") {
  const int h = 20, w = 18;
  FilterBankExtractor fb;
  Tensor f = fb.extract(Tensor::full({h, w}, 0.37));
  auto smooth = channel(f, 1);
  auto gx = channel(f, 2);
  auto gy = channel(f, 3);
  for (int i = 0; i < h * w; ++i) {
    CHECK(smooth[static_cast<size_t>(i)] == doctest::Approx(0.37).epsilon(1e-14));
    CHECK(std::abs(gx[static_cast<size_t>(i)]) <= 1e-14);
    CHECK(std::abs(gy[static_cast<size_t>(i)]) <= 1e-14);
  }
}

TEST_CASE("vertical step edge shows up in the horizontal gradient only") {
  const int h = 16, w = 30, edge = 15;
  std::vector<double> img(static_cast<size_t>(h) * w, 0.2);
  for (int y = 0; y < h; ++y)
    for (int x = edge; x < w; ++x) img[static_cast<size_t>(y) * w + x] = 0.8;

  FilterBankExtractor fb;
  Tensor f = fb.extract(Tensor::from({h, w}, img));
  auto gx = channel(f, 2);
  auto gy = channel(f, 3);

  for (int i = 0; i < h * w; ++i) CHECK(std::abs(gy[static_cast<size_t>(i)]) <= 1e-14);
  const int row = h / 2;
  int best = 0;
  for (int x = 1; x < w; ++x)
    if (gx[static_cast<size_t>(row) * w + x] > gx[static_cast<size_t>(row) * w + best]) best = x;
  CHECK((best == edge - 1 || best == edge));
  CHECK(gx[static_cast<size_t>(row) * w + best] > 0.01);
}

TEST_CASE("single bright pixel smooths to the kernel imprint") {
  const int h = 25, w = 25, y0 = 12, x0 = 12;
  std::vector<double> img(static_cast<size_t>(h) * w, 0.0);
  img[static_cast<size_t>(y0) * w + x0] = 1.0;

  FilterBankExtractor fb;
  auto taps = fb.kernel();
  auto smooth = channel(fb.extract(Tensor::from({h, w}, img)), 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int dy = y - y0, dx = x - x0;
      const double v = smooth[static_cast<size_t>(y) * w + x];
      if (std::abs(dy) <= 6 && std::abs(dx) <= 6)
        CHECK(v == doctest::Approx(taps[static_cast<size_t>(dy + 6)] *
                                   taps[static_cast<size_t>(dx + 6)])
                       .epsilon(1e-12));
      else
        CHECK(v == 0.0);
    }
  }
}

TEST_CASE("extractor is safe to share across threads") {
  FilterBankExtractor fb;
  Rng rng(5);
  Tensor img = random_tensor({12, 9}, rng, 0.0, 1.0);
  Tensor serial = fb.extract(img);

  std::vector<Tensor> results(4);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] { results[static_cast<size_t>(t)] = fb.extract(img); });
  for (auto& th : threads) th.join();
  for (const auto& r : results)
    for (long long i = 0; i < r.size(); ++i) CHECK(r.at(i) == serial.at(i));
}

TEST_CASE("attention map dilates the mask and keeps a floor") {
  Tensor zero = Tensor::zeros({5, 7});
  Tensor a = attention_map(zero, 3);
  for (double v : a.values()) CHECK(v == 0.05);

  Rng rng(3);
  Tensor soft = random_tensor({5, 7}, rng, 0.0, 0.9);
  Tensor degenerate = attention_map(soft, 0);
  for (long long i = 0; i < soft.size(); ++i)
    CHECK(degenerate.at(i) == std::max(soft.at(i), 0.05));

  Tensor spike = Tensor::zeros({9, 9});
  (*spike.data)[4 * 9 + 4] = 0.9;
  Tensor dilated = attention_map(spike, 2);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      const int dy = y - 4, dx = x - 4;
      const double expect = (dy * dy + dx * dx <= 4) ? 0.9 : 0.05;
      CHECK(dilated.at(y * 9 + x) == expect);
    }

  CHECK_THROWS_AS(attention_map(zero, -1), std::invalid_argument);
  CHECK_THROWS_AS(attention_map(Tensor::zeros({5}), 1), std::invalid_argument);
}

TEST_CASE("cosine loss vanishes on identical features and peaks on opposite ones") {
  Rng rng(11);
  Tensor f = random_tensor({4, 6, 5}, rng, 0.1, 1.0);
  Tensor attn = random_tensor({6, 5}, rng, 0.05, 1.0);
  CHECK(std::abs(acs_loss(f, f, attn).value()) < 1e-9);

  std::vector<double> neg(f.values());
  for (auto& v : neg) v = -v;
  Tensor fneg = Tensor::from(f.shape, std::move(neg));
  CHECK(acs_loss(f, fneg, attn).value() == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("cosine loss hand example") {
  // Two pixels with two channels: vectors (1,0) vs (1,0) then (1,0) vs (0,1),
  // so per-pixel cosines are 1 and 0; equal attention averages them.
  Tensor f_obs = Tensor::from({2, 1, 2}, {1, 1, 0, 0});
  Tensor f_rend = Tensor::from({2, 1, 2}, {1, 0, 0, 1});
  Tensor attn = Tensor::from({1, 2}, {1, 1});
  CHECK(acs_loss(f_obs, f_rend, attn).value() == doctest::Approx(0.5).epsilon(1e-9));

  // Attention reweighting pulls the average toward the better pixel.
  Tensor attn_skew = Tensor::from({1, 2}, {3, 1});
  CHECK(acs_loss(f_obs, f_rend, attn_skew).value() == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("cosine loss stays within range and handles flat features") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor fo = random_tensor({3, 4, 4}, rng, -1.0, 1.0);
    Tensor fr = random_tensor({3, 4, 4}, rng, -1.0, 1.0);
    Tensor attn = random_tensor({4, 4}, rng, 0.05, 1.0);
    const double v = acs_loss(fo, fr, attn).value();
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
  }
  // All-zero features give cosine 0 everywhere, not a division failure.
  Tensor z = Tensor::zeros({3, 4, 4});
  Tensor attn = Tensor::full({4, 4}, 0.05);
  CHECK(acs_loss(z, z, attn).value() == 1.0);
}

TEST_CASE("cosine loss validation") {
  Tensor f = Tensor::zeros({2, 3, 3});
  Tensor attn = Tensor::full({3, 3}, 0.05);
  CHECK_THROWS_AS(acs_loss(f, Tensor::zeros({2, 3, 4}), attn), std::invalid_argument);
  CHECK_THROWS_AS(acs_loss(Tensor::zeros({9}), Tensor::zeros({9}), attn), std::invalid_argument);
  CHECK_THROWS_AS(acs_loss(f, f, Tensor::full({3, 4}, 0.05)), std::invalid_argument);
  CHECK_THROWS_AS(acs_loss(f, f, Tensor::zeros({3, 3})), std::invalid_argument);
  CHECK_THROWS_AS(acs_loss(f, f, Tensor::full({3, 3}, -0.1)), std::invalid_argument);
}

TEST_CASE("regularizer hand arithmetic") {
  Tensor k_m = Tensor::from({2}, {1.0, 2.0});
  Tensor k_hat = Tensor::from({2}, {1.1, 2.1});
  RegWeights w{10.0, 1.0};
  // Measurement term only: 10 * mean(0.01, 0.01) = 0.1.
  CHECK(st_regularizer(k_hat, k_m, k_hat, w).value() == doctest::Approx(0.1).epsilon(1e-12));

  Tensor prev = Tensor::from({1}, {0.5});
  Tensor cur = Tensor::from({1}, {0.7});
  // Temporal term only: 1 * 0.2^2 = 0.04.
  CHECK(st_regularizer(cur, cur, prev, RegWeights{0.0, 1.0}).value() ==
        doctest::Approx(0.04).epsilon(1e-12));

  CHECK(st_regularizer(k_m, k_m, k_m, w).value() == 0.0);
  CHECK_THROWS_AS(st_regularizer(k_hat, Tensor::zeros({3}), k_hat, w), std::invalid_argument);
  CHECK_THROWS_AS(st_regularizer(k_hat, k_m, k_hat, RegWeights{-1.0, 1.0}),
                  std::invalid_argument);
}

TEST_CASE("regularizer is permutation invariant and linear in each weight") {
  Rng rng(29);
  const int d = 14;
  Tensor k_hat = random_tensor({d}, rng, -1.0, 1.0);
  Tensor k_m = random_tensor({d}, rng, -1.0, 1.0);
  Tensor prev = random_tensor({d}, rng, -1.0, 1.0);
  RegWeights w{10.0, 1.0};
  const double base = st_regularizer(k_hat, k_m, prev, w).value();

  std::vector<int> perm(d);
  for (int i = 0; i < d; ++i) perm[static_cast<size_t>(i)] = (i * 5 + 3) % d;
  auto permute = [&](const Tensor& t) {
    std::vector<double> v(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) v[static_cast<size_t>(i)] = t.at(perm[static_cast<size_t>(i)]);
    return Tensor::from({d}, std::move(v));
  };
  CHECK(st_regularizer(permute(k_hat), permute(k_m), permute(prev), w).value() ==
        doctest::Approx(base).epsilon(1e-12));

  const double no_l1 = st_regularizer(k_hat, k_m, prev, RegWeights{0.0, 1.0}).value();
  const double l1_once = st_regularizer(k_hat, k_m, prev, RegWeights{5.0, 1.0}).value() - no_l1;
  const double l1_twice = st_regularizer(k_hat, k_m, prev, RegWeights{10.0, 1.0}).value() - no_l1;
  CHECK(l1_twice == doctest::Approx(2.0 * l1_once).epsilon(1e-12));

  const double no_l2 = st_regularizer(k_hat, k_m, prev, RegWeights{10.0, 0.0}).value();
  const double l2_once = st_regularizer(k_hat, k_m, prev, RegWeights{10.0, 0.5}).value() - no_l2;
  const double l2_twice = st_regularizer(k_hat, k_m, prev, RegWeights{10.0, 1.0}).value() - no_l2;
  CHECK(l2_twice == doctest::Approx(2.0 * l2_once).epsilon(1e-12));
}

TEST_CASE("loss gradients agree with finite differences") {
  Rng rng(41);
  const int c = 3, h = 4, w = 5;
  Tensor f_obs = random_tensor({c, h, w}, rng, -1.0, 1.0);
  Tensor attn = random_tensor({h, w}, rng, 0.05, 1.0);

  auto wrt_rendered = [&](Tape&, const Tensor& x) {
    return acs_loss(f_obs, reshape(x, {c, h, w}), attn);
  };
  CHECK(finite_diff_check(wrt_rendered, random_tensor({c * h * w}, rng, -1.0, 1.0), 1e-5) < 1e-4);

  Tensor f_rend = random_tensor({c, h, w}, rng, -1.0, 1.0);
  auto wrt_attention = [&](Tape&, const Tensor& x) {
    return acs_loss(f_obs, f_rend, attention_map(reshape(x, {h, w}), 1));
  };
  // Values spread in (0.1, 0.9) keep the max filter and floor away from ties.
  std::vector<double> soft(static_cast<size_t>(h) * w);
  for (size_t i = 0; i < soft.size(); ++i)
    soft[i] = 0.1 + 0.8 * static_cast<double>(i) / static_cast<double>(soft.size());
  CHECK(finite_diff_check(wrt_attention, Tensor::from({h * w}, soft), 1e-5) < 1e-4);

  auto wrt_reg = [&](Tape&, const Tensor& x) {
    return st_regularizer(x, Tensor::from({3}, {0.1, 0.2, 0.3}), Tensor::from({3}, {0.0, 0.1, 0.2}),
                          RegWeights{10.0, 1.0});
  };
  CHECK(finite_diff_check(wrt_reg, Tensor::from({3}, {0.15, 0.12, 0.31}), 1e-5) < 1e-4);
}

TEST_CASE("gradients flow through the full extractor into the loss") {
  Rng rng(43);
  const int h = 12, w = 10;
  FilterBankExtractor fb;
  Tensor observed = fb.extract(random_tensor({h, w}, rng, 0.0, 1.0));
  Tensor attn = random_tensor({h, w}, rng, 0.05, 1.0);
  auto f = [&](Tape&, const Tensor& x) {
    return acs_loss(observed, fb.extract(reshape(x, {h, w})), attn);
  };
  CHECK(finite_diff_check(f, random_tensor({h * w}, rng, 0.1, 0.9), 1e-4) < 1e-3);
}
