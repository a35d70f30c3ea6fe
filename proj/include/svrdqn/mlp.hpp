#pragma once

#include <span>
#include <string>
#include <vector>

#include "svrdqn/param_vector.hpp"
#include "svrdqn/rng.hpp"

namespace svrdqn {

enum class Activation { Relu, Tanh };

// Fully-connected network with linear output layer. Weights live in one flat
// ParamVector (per layer: weight matrix block, then bias block) so the
// optimizers can treat the whole network as a single vector.
class MlpNetwork {
 public:
  MlpNetwork() = default;

  // Zero-initialized weights.
  MlpNetwork(std::vector<std::size_t> layer_sizes, std::vector<Activation> hidden_acts);

  // Uniform(-s, s) weight init with s = sqrt(6 / (fan_in + fan_out)), zero biases.
  static MlpNetwork glorot_init(std::vector<std::size_t> layer_sizes,
                                std::vector<Activation> hidden_acts, Rng& rng);
  static MlpNetwork glorot_init(std::vector<std::size_t> layer_sizes, Activation hidden_act,
                                Rng& rng);

  std::size_t input_dim() const { return layer_sizes_.front(); }
  std::size_t output_dim() const { return layer_sizes_.back(); }
  const std::vector<std::size_t>& layer_sizes() const { return layer_sizes_; }
  const std::vector<Activation>& hidden_activations() const { return hidden_acts_; }

  const ParamVector& weights() const { return weights_; }
  ParamVector& weights() { return weights_; }
  void set_weights(const ParamVector& w);

  // Output of the network; pure, deterministic for fixed weights and input.
  std::vector<double> forward(std::span<const double> input) const;

  // Exact gradient of <upstream, forward(input)> with respect to all weights.
  Gradient backward(std::span<const double> input, std::span<const double> upstream) const;

  // Same evaluations against caller-supplied weights of this architecture;
  // lets optimizers probe many parameter points without copying networks.
  std::vector<double> forward_with(const ParamVector& w, std::span<const double> input) const;
  Gradient backward_with(const ParamVector& w, std::span<const double> input,
                         std::span<const double> upstream) const;

  static std::vector<BlockShape> weight_layout(const std::vector<std::size_t>& sizes);

  bool same_architecture(const MlpNetwork& o) const {
    return layer_sizes_ == o.layer_sizes_ && hidden_acts_ == o.hidden_acts_;
  }

 private:
  std::vector<std::size_t> layer_sizes_;
  std::vector<Activation> hidden_acts_;
  ParamVector weights_;
};

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

}  // namespace svrdqn
