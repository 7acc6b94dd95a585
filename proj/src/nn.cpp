#include "emnn/nn.hpp"

#include <cmath>

#include "emnn/error.hpp"

namespace emnn {

std::size_t ParameterSet::add(std::string name, ad::Shape shape, std::vector<double> value) {
  if (ad::numel(shape) != value.size()) throw ShapeError("parameter " + name + ": value does not match shape");
  params_.push_back(ad::Parameter{std::move(name), std::move(shape), std::move(value), {}});
  return params_.size() - 1;
}

std::size_t ParameterSet::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

BoundParameters::BoundParameters(ad::Tape& tape, ParameterSet& params) : tape_(&tape) {
  tensors_.reserve(params.size());
  for (auto& p : params.all()) tensors_.push_back(tape.parameter(p));
}

Mlp::Mlp(ParameterSet& params, const std::string& name, std::vector<std::size_t> widths, ad::Activation act,
         bool activate_output, Rng& rng)
    : widths_(std::move(widths)), act_(act), activate_output_(activate_output) {
  if (widths_.size() < 2) throw ConfigError("mlp " + name + ": needs at least input and output width");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    if (in == 0 || out == 0) throw ConfigError("mlp " + name + ": zero width");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (double& v : w) v = rng.uniform(-limit, limit);
    const std::string prefix = name + "." + std::to_string(l);
    const std::size_t wi = params.add(prefix + ".weight", {in, out}, std::move(w));
    const std::size_t bi = params.add(prefix + ".bias", {out}, std::vector<double>(out, 0.0));
    layers_.push_back({wi, bi});
  }
}

ad::Tensor Mlp::operator()(const ad::Tensor& x, const BoundParameters& bound) const {
  ad::Tensor y = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    y = ad::add_bias(ad::matmul(y, bound[layers_[l].weight]), bound[layers_[l].bias]);
    if (l + 1 < layers_.size() || activate_output_) y = ad::activate(y, act_);
  }
  return y;
}

}  // namespace emnn
