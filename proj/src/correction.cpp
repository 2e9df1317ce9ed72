#include "kinefit/correction.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "kinefit/rng.hpp"

namespace kinefit {

Tensor positional_encoding(int n, int d) {
  if (n < 1 || d < 1)
    throw std::invalid_argument("positional_encoding: n and d must be >= 1");
  std::vector<double> pe(static_cast<size_t>(n) * d);
  for (int pos = 0; pos < n; ++pos) {
    for (int col = 0; col < d; ++col) {
      const int pair = col / 2;
      const double rate = std::pow(10000.0, 2.0 * pair / d);
      const double angle = pos / rate;
      pe[static_cast<size_t>(pos) * d + col] = (col % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from({n, d}, std::move(pe));
}

CorrectionNet CorrectionNet::make(int n, int d, const std::vector<int>& hidden, uint64_t seed) {
  if (n < 1 || d < 1)
    throw std::invalid_argument("correction net: n and d must be >= 1");
  for (int wdt : hidden)
    if (wdt < 1) throw std::invalid_argument("correction net: hidden widths must be >= 1");

  std::vector<int> dims;
  dims.push_back(n * d);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(d);

  CorrectionNet net;
  net.n = n;
  net.d = d;
  Rng rng(seed);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    const bool output_layer = (l + 2 == dims.size());
    std::vector<double> w(static_cast<size_t>(in) * out, 0.0);
    std::vector<double> b(static_cast<size_t>(out), 0.0);
    if (!output_layer) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      for (auto& v : w) v = rng.uniform(-bound, bound);
      for (auto& v : b) v = rng.uniform(-bound, bound);
    }
    net.weights.push_back(Tensor::from({in, out}, std::move(w)));
    net.biases.push_back(Tensor::from({1, out}, std::move(b)));
  }
  return net;
}

void CorrectionNet::validate() const {
  if (n < 1 || d < 1 || weights.empty() || weights.size() != biases.size())
    throw std::invalid_argument("correction net: inconsistent structure");
  if (weights.front().shape[0] != n * d)
    throw std::invalid_argument("correction net: input layer expects " + std::to_string(n * d) +
                                " values");
  if (weights.back().shape[1] != d)
    throw std::invalid_argument("correction net: output layer must emit " + std::to_string(d) +
                                " values");
  for (size_t l = 0; l < weights.size(); ++l) {
    const Shape& ws = weights[l].shape;
    if (ws.size() != 2 || biases[l].shape != Shape{1, ws[1]})
      throw std::invalid_argument("correction net: layer " + std::to_string(l) +
                                  " weight/bias shapes disagree");
    if (l + 1 < weights.size() && weights[l + 1].shape[0] != ws[1])
      throw std::invalid_argument("correction net: layer " + std::to_string(l + 1) +
                                  " input width does not match previous output");
  }
}

std::vector<Tensor*> CorrectionNet::params() {
  std::vector<Tensor*> out;
  for (size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

std::vector<std::string> CorrectionNet::param_names() const {
  std::vector<std::string> out;
  for (size_t l = 0; l < weights.size(); ++l) {
    out.push_back("w" + std::to_string(l));
    out.push_back("b" + std::to_string(l));
  }
  return out;
}

BoundNet bind(Tape& tape, const CorrectionNet& net) {
  net.validate();
  BoundNet bound;
  for (size_t l = 0; l < net.weights.size(); ++l) {
    bound.weights.push_back(tape.leaf(net.weights[l]));
    bound.biases.push_back(tape.leaf(net.biases[l]));
  }
  return bound;
}

Tensor correction_forward(const BoundNet& bound, const Tensor& window) {
  if (window.shape.size() != 2)
    throw std::invalid_argument("correction_forward: window must be 2-D, got " +
                                shape_str(window.shape));
  const int n = window.shape[0];
  const int d = window.shape[1];
  if (bound.weights.empty() || bound.weights.front().shape[0] != n * d ||
      bound.weights.back().shape[1] != d)
    throw std::invalid_argument("correction_forward: window " + shape_str(window.shape) +
                                " does not match network layers");

  Tensor x = reshape(add(window, positional_encoding(n, d)), {1, n * d});
  for (size_t l = 0; l < bound.weights.size(); ++l) {
    x = add(matmul(x, bound.weights[l]), bound.biases[l]);
    if (l + 1 < bound.weights.size()) x = tanh(x);
  }
  Tensor newest = slice(window, (n - 1) * d, d);
  return add(newest, reshape(x, {d}));
}

AdamState AdamState::make(const std::vector<std::pair<std::string, long long>>& sizes) {
  AdamState state;
  for (const auto& [name, count] : sizes) {
    if (count < 1) throw std::invalid_argument("adam: block " + name + " must hold parameters");
    AdamState::Block blk;
    blk.name = name;
    blk.m.assign(static_cast<size_t>(count), 0.0);
    blk.v.assign(static_cast<size_t>(count), 0.0);
    state.blocks.push_back(std::move(blk));
  }
  return state;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr))
    throw std::invalid_argument("adam: learning rate must be finite and > 0");
  if (params.size() != state.blocks.size() || grads.size() != state.blocks.size())
    throw std::invalid_argument("adam: expected " + std::to_string(state.blocks.size()) +
                                " parameter blocks");
  for (size_t i = 0; i < grads.size(); ++i) {
    const AdamState::Block& blk = state.blocks[i];
    if (static_cast<size_t>(grads[i].size()) != blk.m.size() ||
        static_cast<size_t>(params[i]->size()) != blk.m.size())
      throw std::invalid_argument("adam: size mismatch in block " + blk.name);
    for (double g : grads[i].values())
      if (!std::isfinite(g)) throw std::runtime_error("adam: non-finite gradient in block " + blk.name);
  }

  ++state.step;
  const double corr1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < state.blocks.size(); ++i) {
    AdamState::Block& blk = state.blocks[i];
    auto& p = *params[i]->data;
    const auto& g = grads[i].values();
    for (size_t j = 0; j < blk.m.size(); ++j) {
      blk.m[j] = state.beta1 * blk.m[j] + (1.0 - state.beta1) * g[j];
      blk.v[j] = state.beta2 * blk.v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = blk.m[j] / corr1;
      const double v_hat = blk.v[j] / corr2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

void save_weights(const std::filesystem::path& path, const CorrectionNet& net) {
  net.validate();
  nlohmann::json header;
  header["format"] = "kinefit-weights-v1";
  header["n"] = net.n;
  header["d"] = net.d;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& w : net.weights) layers.push_back({w.shape[0], w.shape[1]});
  header["layers"] = layers;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("weights " + path.string() + ": cannot open for writing");
  out << header.dump() << '\n';
  auto write_block = [&](const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.data->data()),
              static_cast<std::streamsize>(sizeof(double) * t.data->size()));
  };
  for (size_t l = 0; l < net.weights.size(); ++l) {
    write_block(net.weights[l]);
    write_block(net.biases[l]);
  }
  if (!out) throw std::runtime_error("weights " + path.string() + ": write failed");
}

CorrectionNet load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("weights " + path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("weights " + path.string() + ": missing header");
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "kinefit-weights-v1")
    throw std::runtime_error("weights " + path.string() + ": unrecognized header");

  CorrectionNet net;
  net.n = header.at("n").get<int>();
  net.d = header.at("d").get<int>();
  auto read_block = [&](Shape shape) {
    std::vector<double> vals(static_cast<size_t>(numel(shape)));
    in.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(sizeof(double) * vals.size()));
    if (!in) throw std::runtime_error("weights " + path.string() + ": truncated blob");
    return Tensor::from(std::move(shape), std::move(vals));
  };
  for (const auto& dims : header.at("layers")) {
    const int in_w = dims.at(0).get<int>();
    const int out_w = dims.at(1).get<int>();
    net.weights.push_back(read_block({in_w, out_w}));
    net.biases.push_back(read_block({1, out_w}));
  }
  char extra;
  if (in.read(&extra, 1))
    throw std::runtime_error("weights " + path.string() + ": trailing bytes after blob");
  net.validate();
  return net;
}

}  // namespace kinefit
