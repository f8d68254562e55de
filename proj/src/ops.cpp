#include "ran/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace ran {
namespace {

Graph& common_graph(const Var& a, const Var& b, const char* op) {
  if (&a.graph() != &b.graph()) throw GraphError(std::string(op) + ": operands belong to different graphs");
  return a.graph();
}

bool is_integer(double p) { return std::floor(p) == p; }

}  // namespace

double stable_sigmoid(double x) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  double s;
  if (x >= 0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, lo, hi);
}

Tensor softmax(const Tensor& logits) {
  const Shape& s = logits.shape;
  Tensor out(s);
  const Index plane = s.plane();
  for (Index n = 0; n < s.n; ++n) {
    const double* in = logits.plane(n, 0);
    double* dst = out.plane(n, 0);
    for (Index p = 0; p < plane; ++p) {
      double m = in[p];
      for (Index c = 1; c < s.c; ++c) m = std::max(m, in[c * plane + p]);
      double z = 0;
      for (Index c = 0; c < s.c; ++c) z += std::exp(in[c * plane + p] - m);
      for (Index c = 0; c < s.c; ++c) dst[c * plane + p] = std::exp(in[c * plane + p] - m) / z;
    }
  }
  return out;
}

Var conv2d(const Var& input, const Var& weight, const Var& bias, const ConvGeometry& geometry) {
  Graph& g = common_graph(input, weight, "conv2d");
  common_graph(input, bias, "conv2d");
  Tensor out = kernels::conv2d_forward(input.value(), weight.value(), bias.value(), geometry);
  return g.record(OpTag::Conv2d, {input.id(), weight.id(), bias.id()}, std::move(out),
                  [geometry](const BackwardContext& ctx) {
                    kernels::conv2d_backward(ctx.input(0), ctx.input(1), ctx.dout(), ctx.output().shape, geometry,
                                             ctx.dinput(0), ctx.dinput(1), ctx.dinput(2));
                  });
}

Var power_transform(const Var& x, double scale, double shift, double power) {
  const ArrayXd base = scale * x.value().data + shift;
  ArrayXd result;
  if (power == 1.0) {
    result = base;
  } else if (power == -1.0) {
    if ((base == 0.0).any()) throw DomainError("power_transform: zero base with power -1");
    result = base.inverse();
  } else {
    if (!is_integer(power) && (base <= 0.0).any())
      throw DomainError("power_transform: non-positive base with non-integer power");
    result = base.pow(power);
  }
  Tensor out(x.shape(), std::move(result));
  return x.graph().record(OpTag::PowerTransform, {x.id()}, std::move(out),
                          [scale, shift, power](const BackwardContext& ctx) {
                            ArrayXd* dx = ctx.dinput(0);
                            if (!dx) return;
                            if (power == 1.0) {
                              *dx += scale * ctx.dout();
                              return;
                            }
                            const ArrayXd base = scale * ctx.input(0).data + shift;
                            if (power == -1.0) {
                              *dx -= scale * ctx.dout() * ctx.output().data.square();
                            } else {
                              *dx += power * scale * ctx.dout() * base.pow(power - 1.0);
                            }
                          });
}

Var relu(const Var& x) {
  Tensor out(x.shape(), x.value().data.max(0.0).eval());
  return x.graph().record(OpTag::Relu, {x.id()}, std::move(out), [](const BackwardContext& ctx) {
    if (ArrayXd* dx = ctx.dinput(0)) *dx += (ctx.input(0).data > 0.0).select(ctx.dout(), 0.0);
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x.shape(), x.value().data.unaryExpr([](double v) { return stable_sigmoid(v); }).eval());
  return x.graph().record(OpTag::Sigmoid, {x.id()}, std::move(out), [](const BackwardContext& ctx) {
    if (ArrayXd* dx = ctx.dinput(0)) {
      const ArrayXd& s = ctx.output().data;
      *dx += ctx.dout() * s * (1.0 - s);
    }
  });
}

Var add(const Var& a, const Var& b) {
  Graph& g = common_graph(a, b, "add");
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out(a.shape(), (a.value().data + b.value().data).eval());
  return g.record(OpTag::Add, {a.id(), b.id()}, std::move(out), [](const BackwardContext& ctx) {
    if (ArrayXd* da = ctx.dinput(0)) *da += ctx.dout();
    if (ArrayXd* db = ctx.dinput(1)) *db += ctx.dout();
  });
}

Var sub(const Var& a, const Var& b) {
  Graph& g = common_graph(a, b, "sub");
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor out(a.shape(), (a.value().data - b.value().data).eval());
  return g.record(OpTag::Sub, {a.id(), b.id()}, std::move(out), [](const BackwardContext& ctx) {
    if (ArrayXd* da = ctx.dinput(0)) *da += ctx.dout();
    if (ArrayXd* db = ctx.dinput(1)) *db -= ctx.dout();
  });
}

Var mul(const Var& a, const Var& b) {
  Graph& g = common_graph(a, b, "mul");
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor out(a.shape(), (a.value().data * b.value().data).eval());
  return g.record(OpTag::Mul, {a.id(), b.id()}, std::move(out), [](const BackwardContext& ctx) {
    if (ArrayXd* da = ctx.dinput(0)) *da += ctx.dout() * ctx.input(1).data;
    if (ArrayXd* db = ctx.dinput(1)) *db += ctx.dout() * ctx.input(0).data;
  });
}

Var max_pool2d(const Var& x, Index kernel, Index stride) {
  auto argmax = std::make_shared<std::vector<Index>>();
  Tensor out = kernels::max_pool2d_forward(x.value(), kernel, stride, *argmax);
  return x.graph().record(OpTag::MaxPool2d, {x.id()}, std::move(out), [argmax](const BackwardContext& ctx) {
    ArrayXd* dx = ctx.dinput(0);
    if (!dx) return;
    const ArrayXd& dout = ctx.dout();
    for (Index o = 0; o < dout.size(); ++o) (*dx)[(*argmax)[static_cast<std::size_t>(o)]] += dout[o];
  });
}

Var sum(const Var& x) {
  Tensor out({1, 1, 1, 1});
  out.data[0] = x.value().data.sum();
  return x.graph().record(OpTag::Sum, {x.id()}, std::move(out), [](const BackwardContext& ctx) {
    if (ArrayXd* dx = ctx.dinput(0)) *dx += ctx.dout()[0];
  });
}

Var detach(const Var& x) {
  Tensor copy(x.shape(), x.value().data);
  return x.graph().record(OpTag::Detach, {x.id()}, std::move(copy), nullptr);
}

Var softmax_cross_entropy(const Var& logits, const LabelMap& labels, int ignore_label) {
  const Shape& s = logits.shape();
  if (labels.n != s.n || labels.h != s.h || labels.w != s.w)
    throw ShapeError("softmax_cross_entropy: label map does not match logits");
  const Index plane = s.plane();
  Index count = 0;
  for (std::uint8_t l : labels.data) {
    if (l == ignore_label) continue;
    if (l >= s.c) throw ClassError("softmax_cross_entropy: label " + std::to_string(l) + " out of range");
    ++count;
  }
  if (count == 0) throw EmptyLossError("softmax_cross_entropy: every pixel is ignored");

  auto probs = std::make_shared<Tensor>(softmax(logits.value()));
  const Tensor& z = logits.value();
  double total = 0;
  for (Index n = 0; n < s.n; ++n) {
    const double* in = z.plane(n, 0);
    for (Index p = 0; p < plane; ++p) {
      const std::uint8_t l = labels.data[static_cast<std::size_t>(n * plane + p)];
      if (l == ignore_label) continue;
      double m = in[p];
      for (Index c = 1; c < s.c; ++c) m = std::max(m, in[c * plane + p]);
      double acc = 0;
      for (Index c = 0; c < s.c; ++c) acc += std::exp(in[c * plane + p] - m);
      total += m + std::log(acc) - in[l * plane + p];
    }
  }
  Tensor out({1, 1, 1, 1});
  out.data[0] = total / static_cast<double>(count);

  return logits.graph().record(
      OpTag::SoftmaxCrossEntropy, {logits.id()}, std::move(out),
      [probs, labels, ignore_label, count](const BackwardContext& ctx) {
        ArrayXd* dx = ctx.dinput(0);
        if (!dx) return;
        const Shape& sh = probs->shape;
        const Index pl = sh.plane();
        const double g = ctx.dout()[0] / static_cast<double>(count);
        for (Index n = 0; n < sh.n; ++n) {
          for (Index p = 0; p < pl; ++p) {
            const std::uint8_t l = labels.data[static_cast<std::size_t>(n * pl + p)];
            if (l == ignore_label) continue;
            for (Index c = 0; c < sh.c; ++c) {
              const Index idx = probs->offset(n, c, 0, 0) + p;
              (*dx)[idx] += g * (probs->data[idx] - (c == l ? 1.0 : 0.0));
            }
          }
        }
      });
}

}  // namespace ran
