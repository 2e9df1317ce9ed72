#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kinefit/tensor.hpp"

namespace kinefit {

/// Scalar-valued function of one tensor. The tape argument is live when
/// gradients are wanted; for plain evaluation the input is a constant and
/// operations run eagerly.
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

/// Compares the reverse-mode gradient of `f` at `point` against central
/// differences with step `eps`. Returns the worst coordinate's relative
/// error |ad - fd| / (|fd| + 1e-8). Throws if `f` produces a non-finite
/// value, naming the offending coordinate.
double finite_diff_check(const ScalarFn& f, const Tensor& point, double eps);

/// One named finite-difference comparison from the verification battery.
struct GradCheckCase {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  bool passed = false;
};

/// Full gradient verification battery: every elementary tensor op and the
/// correction-net forward pass against central differences at tolerance
/// 1e-4, then `scenes` randomized render -> feature -> alignment loss +
/// regularizer chains at tolerance 1e-3, differentiated jointly w.r.t.
/// the joint vector and the mounting pose ("scene 1".."scene N").
/// Deterministic for a fixed seed.
GradCheckReport gradient_suite(uint64_t seed, int scenes = 10);

}  // namespace kinefit
