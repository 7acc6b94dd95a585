#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emnn/model.hpp"

namespace emnn {

struct CheckOptions {
  std::size_t trials = 20;
  double tolerance = 1e-7;
  std::uint64_t seed = 0;
  /// Replace every random draw by the identity; all deviations must then be exactly zero.
  bool identity = false;
  /// Build face corners by vertex index instead of winding, breaking reflection equivariance.
  bool inject_fault = false;
};

struct CheckResult {
  std::string name;
  std::string description;
  double deviation = 0.0;       // max abs deviation over trials
  bool expect_violation = false;
  bool passed = false;
};

struct EquivarianceReport {
  std::vector<CheckResult> checks;
  std::size_t trials = 0;
  double tolerance = 0.0;
  bool passed = false;

  const CheckResult& at(const std::string& name) const;
  std::vector<std::string> failing() const;
  std::string to_text() const;
};

/// Randomized equivariance checks of `model` on `mesh`:
///   h_invariance        h and logits under proper rigid motions
///   x_covariance        X maps to Q X (+ t on the position channel)
///   reflection_swap     improper Q with reversed winding
///   reflection_no_swap  improper Q, winding kept; must deviate for orientation-sensitive models
///   permutation         vertex relabeling permutes outputs
///   scale               uniform scaling is absorbed by normalization
/// Motions are applied both to the prepared node state and to the raw mesh
/// before normalization; the worst deviation is reported.
EquivarianceReport check_equivariance(Model& model, const Mesh& mesh, const CheckOptions& options);

}  // namespace emnn
