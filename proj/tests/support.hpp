#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "emnn/error.hpp"
#include "emnn/random.hpp"
#include "emnn/tensor.hpp"
#include "emnn/vec3.hpp"

namespace testing {

inline std::vector<double> random_values(emnn::Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

// Collects warnings for the lifetime of the object.
class WarningCapture {
 public:
  WarningCapture() {
    previous_ = emnn::set_warning_handler([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarningCapture() { emnn::set_warning_handler(previous_); }
  std::vector<std::string> messages;

 private:
  emnn::WarningHandler previous_;
};

}  // namespace testing
