#pragma once

#include "ran/autograd.hpp"
#include "ran/kernels.hpp"

namespace ran {

using kernels::ConvGeometry;

// Differentiable ops. Binary ops require identical shapes; there is no broadcasting.

Var conv2d(const Var& input, const Var& weight, const Var& bias, const ConvGeometry& geometry = {});

/// (scale * x + shift)^power elementwise. power == -1 rejects a zero base;
/// non-integer powers reject non-positive bases.
Var power_transform(const Var& x, double scale, double shift, double power);

/// Sign flip, the NEG block.
inline Var neg(const Var& x) { return power_transform(x, -1.0, 0.0, 1.0); }
inline Var scale(const Var& x, double factor) { return power_transform(x, factor, 0.0, 1.0); }

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var max_pool2d(const Var& x, Index kernel, Index stride);
Var sum(const Var& x);

/// Copy of x that blocks gradient flow.
Var detach(const Var& x);

/// Mean over non-ignored pixels of -log softmax(logits)[label]. Returns a (1,1,1,1) value.
Var softmax_cross_entropy(const Var& logits, const LabelMap& labels, int ignore_label = kIgnoreLabel);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

/// Logistic function with the result kept inside the open interval (0, 1).
double stable_sigmoid(double x);

/// Per-pixel softmax over channels.
Tensor softmax(const Tensor& logits);

// Forward-only helpers used at inference time.
using kernels::elementwise_max;
using kernels::resize_bilinear;

}  // namespace ran
