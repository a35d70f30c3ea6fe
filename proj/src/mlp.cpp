#include "svrdqn/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace svrdqn {

MlpNetwork::MlpNetwork(std::vector<std::size_t> layer_sizes, std::vector<Activation> hidden_acts)
    : layer_sizes_(std::move(layer_sizes)), hidden_acts_(std::move(hidden_acts)) {
  if (layer_sizes_.size() < 2)
    throw std::invalid_argument("MlpNetwork: need at least input and output layer");
  for (std::size_t s : layer_sizes_)
    if (s == 0) throw std::invalid_argument("MlpNetwork: zero layer size");
  const std::size_t hidden = layer_sizes_.size() - 2;
  if (hidden_acts_.size() != hidden)
    throw std::invalid_argument("MlpNetwork: one activation tag per hidden layer expected");
  weights_ = ParamVector(weight_layout(layer_sizes_));
}

MlpNetwork MlpNetwork::glorot_init(std::vector<std::size_t> layer_sizes,
                                   std::vector<Activation> hidden_acts, Rng& rng) {
  MlpNetwork net(std::move(layer_sizes), std::move(hidden_acts));
  const auto& sizes = net.layer_sizes_;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double fan_in = static_cast<double>(sizes[l]);
    const double fan_out = static_cast<double>(sizes[l + 1]);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    auto w = net.weights_.block(2 * l);  // bias block stays zero
    for (auto& x : w) x = rng.uniform(-bound, bound);
  }
  return net;
}

MlpNetwork MlpNetwork::glorot_init(std::vector<std::size_t> layer_sizes, Activation hidden_act,
                                   Rng& rng) {
  std::vector<Activation> acts(layer_sizes.size() >= 2 ? layer_sizes.size() - 2 : 0, hidden_act);
  return glorot_init(std::move(layer_sizes), std::move(acts), rng);
}

void MlpNetwork::set_weights(const ParamVector& w) {
  weights_.check_shape(w);
  weights_ = w;
}

std::vector<BlockShape> MlpNetwork::weight_layout(const std::vector<std::size_t>& sizes) {
  std::vector<BlockShape> layout;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    layout.push_back({sizes[l + 1], sizes[l]});  // weight matrix, row-major out x in
    layout.push_back({sizes[l + 1], 1});         // bias
  }
  return layout;
}

namespace {

inline double apply_act(Activation a, double z) {
  switch (a) {
    case Activation::Relu:
      return z > 0.0 ? z : 0.0;
    case Activation::Tanh:
      return std::tanh(z);
  }
  return z;
}

// derivative expressed through the activation value where possible
inline double act_deriv(Activation a, double z, double y) {
  switch (a) {
    case Activation::Relu:
      return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh:
      return 1.0 - y * y;
  }
  return 1.0;
}

}  // namespace

std::vector<double> MlpNetwork::forward(std::span<const double> input) const {
  return forward_with(weights_, input);
}

Gradient MlpNetwork::backward(std::span<const double> input,
                              std::span<const double> upstream) const {
  return backward_with(weights_, input, upstream);
}

std::vector<double> MlpNetwork::forward_with(const ParamVector& weights,
                                             std::span<const double> input) const {
  weights_.check_shape(weights);
  if (input.size() != input_dim())
    throw std::invalid_argument("MlpNetwork::forward: input dimension mismatch");
  std::vector<double> a(input.begin(), input.end());
  const std::size_t n_layers = layer_sizes_.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t in = layer_sizes_[l];
    const std::size_t out = layer_sizes_[l + 1];
    auto w = weights.block(2 * l);
    auto b = weights.block(2 * l + 1);
    std::vector<double> next(out);
    for (std::size_t r = 0; r < out; ++r) {
      double z = b[r];
      const double* row = w.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) z += row[c] * a[c];
      next[r] = (l + 1 < n_layers) ? apply_act(hidden_acts_[l], z) : z;
    }
    a = std::move(next);
  }
  return a;
}

Gradient MlpNetwork::backward_with(const ParamVector& weights, std::span<const double> input,
                                   std::span<const double> upstream) const {
  weights_.check_shape(weights);
  if (input.size() != input_dim())
    throw std::invalid_argument("MlpNetwork::backward: input dimension mismatch");
  if (upstream.size() != output_dim())
    throw std::invalid_argument("MlpNetwork::backward: upstream dimension mismatch");

  const std::size_t n_layers = layer_sizes_.size() - 1;

  // forward pass, keeping pre-activations and activations per layer
  std::vector<std::vector<double>> acts(n_layers + 1);
  std::vector<std::vector<double>> pre(n_layers);
  acts[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t in = layer_sizes_[l];
    const std::size_t out = layer_sizes_[l + 1];
    auto w = weights.block(2 * l);
    auto b = weights.block(2 * l + 1);
    pre[l].resize(out);
    acts[l + 1].resize(out);
    for (std::size_t r = 0; r < out; ++r) {
      double z = b[r];
      const double* row = w.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) z += row[c] * acts[l][c];
      pre[l][r] = z;
      acts[l + 1][r] = (l + 1 < n_layers) ? apply_act(hidden_acts_[l], z) : z;
    }
  }

  Gradient grad{weights.zero_like(), GradSource::SingleSample};

  std::vector<double> delta(upstream.begin(), upstream.end());  // output layer is linear
  for (std::size_t l = n_layers; l-- > 0;) {
    const std::size_t in = layer_sizes_[l];
    const std::size_t out = layer_sizes_[l + 1];
    auto gw = grad.v.block(2 * l);
    auto gb = grad.v.block(2 * l + 1);
    for (std::size_t r = 0; r < out; ++r) {
      gb[r] = delta[r];
      double* row = gw.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) row[c] = delta[r] * acts[l][c];
    }
    if (l > 0) {
      auto w = weights.block(2 * l);
      std::vector<double> prev(in, 0.0);
      for (std::size_t r = 0; r < out; ++r) {
        const double* row = w.data() + r * in;
        for (std::size_t c = 0; c < in; ++c) prev[c] += row[c] * delta[r];
      }
      for (std::size_t c = 0; c < in; ++c)
        prev[c] *= act_deriv(hidden_acts_[l - 1], pre[l - 1][c], acts[l][c]);
      delta = std::move(prev);
    }
  }
  return grad;
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string activation_name(Activation a) {
  return a == Activation::Relu ? "relu" : "tanh";
}

}  // namespace svrdqn
