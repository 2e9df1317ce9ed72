#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "kinefit/tensor.hpp"

namespace kinefit {

// Sinusoidal position stamp added to a measurement window so the network can
// tell the frames apart. Rows are positions [0, n), columns pair up as
// sin/cos of pos / 10000^(2i/d).
Tensor positional_encoding(int n, int d);

// Residual MLP over a flattened n x d measurement window. Hidden layers are
// tanh, the output layer is linear and starts at exactly zero so the initial
// correction is the identity on the newest frame.
struct CorrectionNet {
  int n = 0;
  int d = 0;
  std::vector<Tensor> weights;  // [in, out] per layer
  std::vector<Tensor> biases;   // [1, out] per layer

  static CorrectionNet make(int n, int d, const std::vector<int>& hidden, uint64_t seed);

  int layer_count() const { return static_cast<int>(weights.size()); }
  std::vector<Tensor*> params();
  std::vector<std::string> param_names() const;
  void validate() const;
};

// Network parameters registered as leaves on a tape for one iteration.
struct BoundNet {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
};

BoundNet bind(Tape& tape, const CorrectionNet& net);

// Corrected newest-frame kinematics: newest window row plus the network
// residual over the position-stamped window.
Tensor correction_forward(const BoundNet& bound, const Tensor& window);

// Adam accumulators over named parameter blocks sharing one step counter.
struct AdamState {
  struct Block {
    std::string name;
    std::vector<double> m, v;
  };

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  std::vector<Block> blocks;

  static AdamState make(const std::vector<std::pair<std::string, long long>>& sizes);
};

// One bias-corrected Adam update, in place. Gradients align with the
// state's blocks and are rejected if any entry is non-finite.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr);

// Flat binary weight blob with a one-line JSON shape header.
void save_weights(const std::filesystem::path& path, const CorrectionNet& net);
CorrectionNet load_weights(const std::filesystem::path& path);

}  // namespace kinefit
