#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "emnn/random.hpp"
#include "emnn/tensor.hpp"

namespace emnn {

/// Ordered, named collection of learnable tensors. Entries are appended
/// while a model is built and never removed, so indices stay valid.
class ParameterSet {
 public:
  std::size_t add(std::string name, ad::Shape shape, std::vector<double> value);

  std::size_t size() const { return params_.size(); }
  ad::Parameter& operator[](std::size_t i) { return params_[i]; }
  const ad::Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::vector<ad::Parameter>& all() { return params_; }
  const std::vector<ad::Parameter>& all() const { return params_; }

  /// Total number of scalar weights.
  std::size_t num_values() const;
  void zero_grad();

 private:
  std::vector<ad::Parameter> params_;
};

/// A ParameterSet bound to one tape as gradient-receiving leaves.
class BoundParameters {
 public:
  BoundParameters(ad::Tape& tape, ParameterSet& params);
  const ad::Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  ad::Tape& tape() const { return *tape_; }

 private:
  ad::Tape* tape_;
  std::vector<ad::Tensor> tensors_;
};

/// Fully connected network: Linear, act, Linear, act, ..., Linear, with an
/// optional activation after the last layer.
class Mlp {
 public:
  Mlp() = default;
  /// widths = {in, hidden..., out}; Xavier-uniform weights, zero biases.
  Mlp(ParameterSet& params, const std::string& name, std::vector<std::size_t> widths, ad::Activation act,
      bool activate_output, Rng& rng);

  ad::Tensor operator()(const ad::Tensor& x, const BoundParameters& bound) const;

  bool empty() const { return layers_.empty(); }
  std::size_t in_dim() const { return widths_.front(); }
  std::size_t out_dim() const { return widths_.back(); }

 private:
  struct Linear {
    std::size_t weight;
    std::size_t bias;
  };
  std::vector<Linear> layers_;
  std::vector<std::size_t> widths_;
  ad::Activation act_ = ad::Activation::silu;
  bool activate_output_ = false;
};

}  // namespace emnn
