#include "spam/network.hpp"

#include <algorithm>
#include <cmath>

#include "spam/error.hpp"

namespace spam {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw StructuralError("unknown activation '" + name + "'");
}

std::vector<LayerSpec> mlp_layers(std::span<const std::size_t> widths, Activation hidden_activation, bool bias) {
  if (widths.size() < 2) throw StructuralError("mlp_layers: need at least input and output widths");
  std::vector<LayerSpec> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool last = l + 2 == widths.size();
    layers.push_back({widths[l], widths[l + 1], last ? Activation::Identity : hidden_activation, bias});
  }
  return layers;
}

namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Identity: return z;
  }
  return z;
}

// Derivative at the pre-activation; ReLU'(0) = 0.
double activate_grad(Activation a, double z) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

// Row-major D_in x D_out view of the weight block (that is W^T).
Matrix weight_block(const LayerSpec& spec, std::span<const double> params, std::size_t offset) {
  std::vector<double> data(params.begin() + offset, params.begin() + offset + spec.weight_count());
  return Matrix(spec.in_dim, spec.out_dim, std::move(data));
}

}  // namespace

Network::Network(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw StructuralError("Network: no layers");
  std::size_t total = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = layers_[l];
    if (s.in_dim == 0 || s.out_dim == 0) throw StructuralError("Network: layer " + std::to_string(l) + " has a zero dimension");
    if (l > 0 && layers_[l - 1].out_dim != s.in_dim) {
      throw StructuralError("Network: layer " + std::to_string(l) + " in_dim " + std::to_string(s.in_dim) +
                            " does not match previous out_dim " + std::to_string(layers_[l - 1].out_dim));
    }
    offsets_.push_back(total);
    total += s.param_count();
  }
  params_.assign(total, 0.0);
}

Network Network::initialized(std::vector<LayerSpec> layers, Rng& rng) {
  Network net(std::move(layers));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& s = net.layers_[l];
    const double gain = s.activation == Activation::ReLU ? std::sqrt(2.0) : s.activation == Activation::Tanh ? 5.0 / 3.0 : 1.0;
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(s.in_dim));
    const std::size_t off = net.offsets_[l];
    for (std::size_t k = 0; k < s.weight_count(); ++k) net.params_[off + k] = rng.uniform(-bound, bound);
  }
  return net;
}

void Network::set_params(std::vector<double> params) {
  if (params.size() != params_.size()) throw StructuralError("set_params: length mismatch");
  params_ = std::move(params);
  if (mask_) enforce_mask();
}

std::size_t Network::weight_index(std::size_t l, std::size_t out, std::size_t in) const {
  const auto& s = layers_.at(l);
  if (out >= s.out_dim || in >= s.in_dim) throw StructuralError("weight_index: unit out of range");
  return offsets_[l] + in * s.out_dim + out;
}

std::size_t Network::bias_index(std::size_t l, std::size_t out) const {
  const auto& s = layers_.at(l);
  if (!s.has_bias) throw StructuralError("bias_index: layer " + std::to_string(l) + " has no bias");
  if (out >= s.out_dim) throw StructuralError("bias_index: unit out of range");
  return offsets_[l] + s.weight_count() + out;
}

std::size_t Network::layer_of(std::size_t p) const {
  if (p >= params_.size()) throw StructuralError("layer_of: parameter index out of range");
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), p);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

ParamCoord Network::coord(std::size_t p) const {
  const std::size_t l = layer_of(p);
  const auto& s = layers_[l];
  const std::size_t local = p - offsets_[l];
  if (local < s.weight_count()) return {l, false, local % s.out_dim, local / s.out_dim};
  return {l, true, local - s.weight_count(), 0};
}

std::size_t Network::index_of(const ParamCoord& c) const {
  return c.is_bias ? bias_index(c.layer, c.out_unit) : weight_index(c.layer, c.out_unit, c.in_unit);
}

std::size_t Network::unit_count(std::size_t l) const {
  if (l >= layers_.size()) throw StructuralError("unit_count: layer " + std::to_string(l) + " out of range");
  return layers_[l].out_dim;
}

std::vector<std::size_t> Network::structure_params(std::size_t l, std::size_t unit) const {
  if (l >= layers_.size()) throw StructuralError("structure_params: layer out of range");
  const auto& s = layers_[l];
  if (unit >= s.out_dim) throw StructuralError("structure_params: unit out of range");
  std::vector<std::size_t> idx;
  idx.reserve(s.in_dim + 1);
  for (std::size_t i = 0; i < s.in_dim; ++i) idx.push_back(offsets_[l] + i * s.out_dim + unit);
  if (s.has_bias) idx.push_back(offsets_[l] + s.weight_count() + unit);
  return idx;
}

void Network::set_mask(std::vector<std::uint8_t> mask) {
  if (mask.size() != params_.size()) throw StructuralError("set_mask: length mismatch");
  mask_ = std::move(mask);
  enforce_mask();
}

void Network::enforce_mask() {
  if (!mask_) return;
  for (std::size_t p = 0; p < params_.size(); ++p)
    if ((*mask_)[p] == 0) params_[p] = 0.0;
}

std::vector<double> Network::effective_params() const {
  std::vector<double> w = params_;
  if (mask_)
    for (std::size_t p = 0; p < w.size(); ++p)
      if ((*mask_)[p] == 0) w[p] = 0.0;
  return w;
}

ForwardCache forward_cached(const Network& net, const Matrix& x) {
  if (x.cols() != net.input_dim()) {
    throw StructuralError("forward: input has " + std::to_string(x.cols()) + " features, network expects " +
                          std::to_string(net.input_dim()));
  }
  ForwardCache cache;
  cache.weights = net.effective_params();
  Matrix a = x;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& s = net.layer(l);
    const std::size_t off = net.layer_offset(l);
    Matrix z = matmul(a, weight_block(s, cache.weights, off));
    if (s.has_bias) {
      const double* b = cache.weights.data() + off + s.weight_count();
      for (std::size_t n = 0; n < z.rows(); ++n) {
        auto r = z.row(n);
        for (std::size_t j = 0; j < s.out_dim; ++j) r[j] += b[j];
      }
    }
    Matrix out = z;
    if (s.activation != Activation::Identity)
      for (auto& v : out.values()) v = activate(s.activation, v);
    cache.inputs.push_back(std::move(a));
    cache.preacts.push_back(std::move(z));
    a = std::move(out);
  }
  cache.output = std::move(a);
  return cache;
}

Matrix forward(const Network& net, const Matrix& x) { return forward_cached(net, x).output; }

BackwardResult backward(const Network& net, const ForwardCache& cache, const Matrix& upstream) {
  const std::size_t n = cache.output.rows();
  if (upstream.rows() != n || upstream.cols() != net.output_dim()) {
    throw StructuralError("backward: upstream must be " + std::to_string(n) + "x" + std::to_string(net.output_dim()));
  }
  BackwardResult res;
  res.gradient.assign(net.num_params(), 0.0);
  const std::size_t depth = net.num_layers();
  res.activations.inputs.resize(depth);
  res.activations.output_grads.resize(depth);

  Matrix g = upstream;
  for (std::size_t step = 0; step < depth; ++step) {
    const std::size_t l = depth - 1 - step;
    const auto& s = net.layer(l);
    const Matrix& z = cache.preacts[l];
    if (s.activation != Activation::Identity)
      for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] *= activate_grad(s.activation, z.data()[k]);

    const std::size_t off = net.layer_offset(l);
    const Matrix dw = matmul_tn(cache.inputs[l], g);  // D_in x D_out, matches the layout
    std::copy(dw.values().begin(), dw.values().end(), res.gradient.begin() + static_cast<std::ptrdiff_t>(off));
    if (s.has_bias) {
      double* db = res.gradient.data() + off + s.weight_count();
      for (std::size_t r = 0; r < n; ++r) {
        const auto row = g.row(r);
        for (std::size_t j = 0; j < s.out_dim; ++j) db[j] += row[j];
      }
    }
    Matrix next;
    if (l > 0) next = matmul_nt(g, weight_block(s, cache.weights, off));
    res.activations.inputs[l] = cache.inputs[l];
    res.activations.output_grads[l] = std::move(g);
    g = std::move(next);
  }
  if (net.has_mask()) {
    const auto& m = *net.mask();
    for (std::size_t p = 0; p < m.size(); ++p)
      if (m[p] == 0) res.gradient[p] = 0.0;
  }
  return res;
}

BackwardResult backward(const Network& net, const Matrix& x, const Matrix& upstream) {
  return backward(net, forward_cached(net, x), upstream);
}

Matrix jacobian(const Network& net, std::span<const double> x, std::size_t param_cap) {
  if (net.num_params() > param_cap) {
    throw ResourceError("jacobian: " + std::to_string(net.num_params()) + " parameters exceed the cap of " +
                        std::to_string(param_cap));
  }
  const std::size_t c = net.output_dim();
  Matrix xs(c, x.size());
  for (std::size_t k = 0; k < c; ++k) std::copy(x.begin(), x.end(), xs.row(k).begin());
  const ForwardCache cache = forward_cached(net, xs);
  Matrix jac(c, net.num_params());
  // One backward per output: row k of the batch carries one-hot e_k.
  for (std::size_t k = 0; k < c; ++k) {
    Matrix up(c, c);
    up(k, k) = 1.0;
    const auto r = backward(net, cache, up);
    std::copy(r.gradient.begin(), r.gradient.end(), jac.row(k).begin());
  }
  return jac;
}

}  // namespace spam
