#pragma once

#include <functional>
#include <span>

#include "ran/autograd.hpp"

namespace ran {

/// Builds a scalar loss from inputs bound into a fresh graph.
using LossBuilder = std::function<Var(Graph&, std::span<const Var>)>;
using SingleLossBuilder = std::function<Var(Graph&, const Var&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  Index worst_element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  Index elements_checked = 0;
};

/// Relative discrepancy |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Compares the autodiff gradient of `builder` against central differences
/// (f(x+eps) - f(x-eps)) / (2 eps) for every element of every input.
///
/// `numeric`, when given, is evaluated for the finite differences instead of
/// `builder`. It must compute the same value at the unperturbed inputs; this is
/// how gradients of surrogate objectives (stop-gradient paths) are checked.
GradCheckReport grad_check(const LossBuilder& builder, std::span<const Tensor> inputs, double eps,
                           const LossBuilder* numeric = nullptr);

double grad_check(const SingleLossBuilder& builder, const Tensor& input, double eps);

}  // namespace ran
