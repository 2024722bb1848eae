#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cardioseq/tensor.hpp"

namespace cardioseq {

struct GradcheckOptions {
  /// Central-difference steps, tried in order until one agrees; a coordinate
  /// whose every step disagrees fails.
  std::vector<double> steps{1e-5, 1e-6, 1e-4};
  double threshold = 1e-4;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  /// Coordinates sampled per input tensor; 0 checks all of them.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  std::string name;
  double worst_error = 0;
  std::size_t coordinates = 0;
  bool passed = true;
};

using ScalarFunction = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares the reverse-mode gradient of scalar `f` at `inputs` with central
/// finite differences, coordinate by coordinate.
GradcheckResult check_gradient(const std::string& name, const ScalarFunction& f, std::vector<Tensor<double>> inputs,
                               const GradcheckOptions& options = {});

struct GradcheckReport {
  std::vector<GradcheckResult> results;
  bool passed() const;
};

/// Every differentiable primitive, both losses, and the composite layers and
/// models (residual block, three ConvLSTM steps, encoder, two-frame decoder,
/// full bidirectional model with average and learned fusion) on toy shapes.
GradcheckReport run_gradcheck_suite(std::uint64_t seed, double threshold = 1e-4);

/// Names reported by run_gradcheck_suite, in order.
std::vector<std::string> gradcheck_suite_names();

}  // namespace cardioseq
