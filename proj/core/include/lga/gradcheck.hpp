#pragma once

// Finite-difference gradient checking in double precision.
//
// A checked function maps a set of leaf tensors to an output tensor. The
// scalar probed is sum(output * R) for a fixed random R, so every output
// coordinate contributes. Relative error per coordinate is
// |analytic - numeric| / max(|analytic|, |numeric|, floor).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "lga/model.hpp"
#include "lga/serialize.hpp"
#include "lga/tensor.hpp"

namespace lga::check {

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-3;         // bound on every coordinate
  double strict_tolerance = 1e-4;  // bound on `strict_fraction` of coordinates
  double strict_fraction = 0.99;
  double floor = 1e-6;
  /// Coordinates probed per input tensor; 0 probes all of them.
  std::size_t max_coords = 0;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0;
  std::string worst_input;
  std::size_t coords = 0;
  std::size_t strict_passes = 0;
  bool passed = false;
};

using CheckedFn = std::function<Tensor<double>()>;

/// `inputs` are leaves read by `fn`; their values are perturbed in place and
/// restored. requires_grad is switched on for each of them.
GradCheckResult check_gradients(const std::string& name, const TensorList<double>& inputs,
                                const CheckedFn& fn, const GradCheckOptions& options = {});

/// Every primitive and layer op on small random inputs in [-1, 1].
std::vector<GradCheckResult> check_ops(const GradCheckOptions& options = {});

/// attention_forward for each variant and positional encoding on a small
/// sequence.
std::vector<GradCheckResult> check_attention_variants(const GradCheckOptions& options = {});

/// End-to-end gradient of a model's parameters and input, batch of two.
GradCheckResult check_model(const model::ModelConfig& config, const GradCheckOptions& options = {},
                            const std::string& name = "model");

/// One line per result: name, coordinates, max relative error, verdict.
void write_report(const std::vector<GradCheckResult>& results, std::ostream& out);

}  // namespace lga::check
