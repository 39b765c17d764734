#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spam/rng.hpp"
#include "spam/tensor.hpp"

namespace spam {

enum class Activation { ReLU, Tanh, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct LayerSpec {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  Activation activation = Activation::ReLU;
  bool has_bias = true;

  std::size_t weight_count() const { return in_dim * out_dim; }
  std::size_t param_count() const { return weight_count() + (has_bias ? out_dim : 0); }

  bool operator==(const LayerSpec&) const = default;
};

// Hidden layers use `hidden_activation`, the output layer is Identity.
std::vector<LayerSpec> mlp_layers(std::span<const std::size_t> widths, Activation hidden_activation = Activation::ReLU,
                                  bool bias = true);

// Coordinates of a flat parameter index.
struct ParamCoord {
  std::size_t layer = 0;
  bool is_bias = false;
  std::size_t out_unit = 0;
  std::size_t in_unit = 0;  // unused for biases

  bool operator==(const ParamCoord&) const = default;
};

// A stack of fully-connected layers over one flat parameter vector.
//
// Layer l occupies the contiguous block vec([W_l | b_l]) where W_l is
// D_out x D_in stored column-major: weight (in i -> out j) lives at
// offset(l) + i * D_out + j, and bias j at offset(l) + D_in * D_out + j.
// Seen as a row-major D_in x D_out matrix the weight block is W_l^T, which
// is what forward() multiplies with.
class Network {
 public:
  Network() = default;
  // Zero-initialized parameters. Throws StructuralError unless dims chain.
  explicit Network(std::vector<LayerSpec> layers);

  // Kaiming-uniform fan-in weights, zero biases.
  static Network initialized(std::vector<LayerSpec> layers, Rng& rng);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const LayerSpec& layer(std::size_t l) const { return layers_.at(l); }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_params() const { return params_.size(); }
  std::size_t input_dim() const { return layers_.front().in_dim; }
  std::size_t output_dim() const { return layers_.back().out_dim; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  void set_params(std::vector<double> params);

  std::size_t layer_offset(std::size_t l) const { return offsets_.at(l); }
  std::size_t layer_param_count(std::size_t l) const { return layers_.at(l).param_count(); }
  std::size_t weight_index(std::size_t l, std::size_t out, std::size_t in) const;
  std::size_t bias_index(std::size_t l, std::size_t out) const;
  ParamCoord coord(std::size_t p) const;
  std::size_t index_of(const ParamCoord& c) const;
  // Index of the layer holding parameter p.
  std::size_t layer_of(std::size_t p) const;

  std::span<const double> layer_params(std::size_t l) const {
    return std::span<const double>(params_).subspan(layer_offset(l), layer_param_count(l));
  }

  // Units of layer l are its outputs.
  std::size_t unit_count(std::size_t l) const;
  // Incoming weight row of `unit` plus its bias, ascending.
  std::vector<std::size_t> structure_params(std::size_t l, std::size_t unit) const;

  bool has_mask() const { return mask_.has_value(); }
  const std::optional<std::vector<std::uint8_t>>& mask() const { return mask_; }
  // Stores the mask and zeroes masked parameters.
  void set_mask(std::vector<std::uint8_t> mask);
  void clear_mask() { mask_.reset(); }
  // Zeroes masked parameters again (after an optimizer step, for example).
  void enforce_mask();
  // params with masked entries zeroed (a copy).
  std::vector<double> effective_params() const;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::optional<std::vector<std::uint8_t>> mask_;
};

// Inputs to every layer and pre-activations, kept for backward().
struct ForwardCache {
  std::vector<Matrix> inputs;    // a_l, N x in_dim
  std::vector<Matrix> preacts;   // z_l, N x out_dim
  std::vector<double> weights;   // effective (masked) parameters used
  Matrix output;                 // N x C
};

// Per-layer inputs a_l and gradients g_l = d(sum_n <u_n, f(x_n)>)/dz_l.
struct BatchActivations {
  std::vector<Matrix> inputs;
  std::vector<Matrix> output_grads;
};

struct BackwardResult {
  std::vector<double> gradient;
  BatchActivations activations;
};

Matrix forward(const Network& net, const Matrix& x);
ForwardCache forward_cached(const Network& net, const Matrix& x);

// Gradient of sum_n <upstream_n, f(x_n)> with respect to the parameters.
// Masked entries of the gradient are zero.
BackwardResult backward(const Network& net, const Matrix& x, const Matrix& upstream);
BackwardResult backward(const Network& net, const ForwardCache& cache, const Matrix& upstream);

// C x P Jacobian of f at one input. Throws ResourceError when P > param_cap.
Matrix jacobian(const Network& net, std::span<const double> x, std::size_t param_cap = 100000);

}  // namespace spam
