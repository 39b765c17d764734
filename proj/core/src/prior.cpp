#include "spam/prior.hpp"

#include <cmath>
#include <numbers>

#include "spam/error.hpp"

namespace spam {

std::string to_string(PriorKind k) {
  switch (k) {
    case PriorKind::Scalar: return "scalar";
    case PriorKind::LayerWise: return "layer";
    case PriorKind::UnitWise: return "unit";
    case PriorKind::ParameterWise: return "parameter";
  }
  return "unknown";
}

PriorKind prior_kind_from_string(const std::string& name) {
  if (name == "scalar") return PriorKind::Scalar;
  if (name == "layer" || name == "layerwise") return PriorKind::LayerWise;
  if (name == "unit" || name == "unitwise") return PriorKind::UnitWise;
  if (name == "parameter" || name == "parameterwise") return PriorKind::ParameterWise;
  throw StructuralError("unknown prior kind '" + name + "'");
}

std::vector<std::size_t> unit_group_offsets(const Network& net) {
  std::vector<std::size_t> off{0, net.input_dim()};
  for (std::size_t l = 0; l < net.num_layers(); ++l) off.push_back(off.back() + net.layer(l).out_dim);
  return off;
}

std::size_t PriorSpec::hyper_count(PriorKind kind, const Network& net) {
  switch (kind) {
    case PriorKind::Scalar: return 1;
    case PriorKind::LayerWise: return net.num_layers();
    case PriorKind::UnitWise: return unit_group_offsets(net).back();
    case PriorKind::ParameterWise: return net.num_params();
  }
  return 0;
}

PriorSpec PriorSpec::uniform(PriorKind kind, const Network& net, double delta0) {
  if (!(delta0 > 0.0) || !std::isfinite(delta0)) throw StructuralError("prior precision must be positive and finite");
  return {kind, std::vector<double>(hyper_count(kind, net), std::log(delta0))};
}

namespace {

void check_shape(const PriorSpec& spec, const Network& net) {
  const std::size_t want = PriorSpec::hyper_count(spec.kind, net);
  if (spec.log_delta.size() != want) {
    throw StructuralError(to_string(spec.kind) + " prior has " + std::to_string(spec.log_delta.size()) +
                          " hyperparameters, network needs " + std::to_string(want));
  }
}

}  // namespace

std::vector<double> expand(const PriorSpec& spec, const Network& net) {
  check_shape(spec, net);
  std::vector<double> delta(net.num_params());
  switch (spec.kind) {
    case PriorKind::Scalar:
      std::fill(delta.begin(), delta.end(), std::exp(spec.log_delta[0]));
      break;
    case PriorKind::LayerWise:
      for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const double d = std::exp(spec.log_delta[l]);
        const std::size_t off = net.layer_offset(l);
        for (std::size_t k = 0; k < net.layer_param_count(l); ++k) delta[off + k] = d;
      }
      break;
    case PriorKind::UnitWise: {
      const auto groups = unit_group_offsets(net);
      for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const auto& s = net.layer(l);
        const double* in = spec.log_delta.data() + groups[l];
        const double* out = spec.log_delta.data() + groups[l + 1];
        const std::size_t off = net.layer_offset(l);
        for (std::size_t i = 0; i < s.in_dim; ++i)
          for (std::size_t j = 0; j < s.out_dim; ++j) delta[off + i * s.out_dim + j] = std::exp(in[i] + out[j]);
        if (s.has_bias)
          for (std::size_t j = 0; j < s.out_dim; ++j) delta[off + s.weight_count() + j] = std::exp(out[j]);
      }
      break;
    }
    case PriorKind::ParameterWise:
      for (std::size_t p = 0; p < delta.size(); ++p) delta[p] = std::exp(spec.log_delta[p]);
      break;
  }
  return delta;
}

double log_prior(std::span<const double> delta, std::span<const double> theta) {
  if (delta.size() != theta.size()) throw StructuralError("log_prior: length mismatch");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double s = 0.0;
  for (std::size_t p = 0; p < delta.size(); ++p) s += std::log(delta[p]) - delta[p] * theta[p] * theta[p] - log2pi;
  return 0.5 * s;
}

std::vector<double> chain_to_hypers(const PriorSpec& spec, const Network& net, std::span<const double> grad_wrt_delta) {
  check_shape(spec, net);
  if (grad_wrt_delta.size() != net.num_params()) throw StructuralError("chain_to_hypers: gradient length mismatch");
  const auto delta = expand(spec, net);
  // d delta_p / d log-hyper = delta_p for every hyper that enters delta_p.
  std::vector<double> out(spec.log_delta.size(), 0.0);
  switch (spec.kind) {
    case PriorKind::Scalar:
      for (std::size_t p = 0; p < delta.size(); ++p) out[0] += grad_wrt_delta[p] * delta[p];
      break;
    case PriorKind::LayerWise:
      for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const std::size_t off = net.layer_offset(l);
        for (std::size_t k = 0; k < net.layer_param_count(l); ++k) out[l] += grad_wrt_delta[off + k] * delta[off + k];
      }
      break;
    case PriorKind::UnitWise: {
      const auto groups = unit_group_offsets(net);
      for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const auto& s = net.layer(l);
        double* in = out.data() + groups[l];
        double* outu = out.data() + groups[l + 1];
        const std::size_t off = net.layer_offset(l);
        for (std::size_t i = 0; i < s.in_dim; ++i)
          for (std::size_t j = 0; j < s.out_dim; ++j) {
            const std::size_t p = off + i * s.out_dim + j;
            const double v = grad_wrt_delta[p] * delta[p];
            in[i] += v;
            outu[j] += v;
          }
        if (s.has_bias)
          for (std::size_t j = 0; j < s.out_dim; ++j) {
            const std::size_t p = off + s.weight_count() + j;
            outu[j] += grad_wrt_delta[p] * delta[p];
          }
      }
      break;
    }
    case PriorKind::ParameterWise:
      for (std::size_t p = 0; p < delta.size(); ++p) out[p] = grad_wrt_delta[p] * delta[p];
      break;
  }
  return out;
}

}  // namespace spam
