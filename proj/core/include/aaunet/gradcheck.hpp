#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aaunet/autograd.hpp"
#include "aaunet/random.hpp"

namespace aaunet {

/// Outcome of comparing analytic gradients with central differences.
struct GradCheckCase {
  std::string name;
  double max_rel_error = 0;
  double tolerance = 0;
  std::int64_t elements_checked = 0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  double seconds = 0;
  bool all_passed() const;
};

struct GradCheckOptions {
  /// Base step of the Richardson-extrapolated central difference.
  double step = 1e-4;
  double rtol = 1e-6;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  /// Elements sampled per input tensor; 0 checks all of them.
  std::int64_t max_elements = 0;
};

/// Compares d(loss)/d(input) from `backward` against central differences
/// for every tensor in `inputs`. `loss_fn` must rebuild the graph from the
/// current input values on every call.
GradCheckCase check_gradients(const std::string& name,
                              const std::function<Var<double>()>& loss_fn,
                              const std::vector<Var<double>>& inputs, Rng& rng,
                              const GradCheckOptions& opt = {});

/// Every differentiable op, the attention blocks, each block variant and a
/// depth-2 / base-4 / 16x16 network (50 sampled parameters, rtol 1e-4).
GradCheckReport run_gradient_suite(std::uint64_t seed = 2024, bool include_model = true);

}  // namespace aaunet
