#include "ran/gradient_suite.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "ran/model.hpp"

namespace ran {
namespace {

Tensor uniform(Shape s, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(s);
  for (Index i = 0; i < t.size(); ++i) t.data[i] = d(rng);
  return t;
}

// Values in [-2, -margin] U [margin, 2].
Tensor away_from_zero(Shape s, std::mt19937_64& rng, double margin) {
  Tensor t = uniform(s, rng, -1.0, 1.0);
  for (Index i = 0; i < t.size(); ++i) {
    const double u = t.data[i];
    t.data[i] = (u < 0 ? -1.0 : 1.0) * (margin + std::abs(u) * (2.0 - margin));
  }
  return t;
}

// A shuffled evenly spaced grid over [-2, 2]; all values are pairwise distinct.
Tensor distinct(Shape s, std::mt19937_64& rng) {
  std::vector<Index> order(static_cast<std::size_t>(s.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  Tensor t(s);
  const double step = 4.0 / static_cast<double>(std::max<Index>(1, s.size() - 1));
  for (Index i = 0; i < t.size(); ++i) t.data[i] = -2.0 + step * static_cast<double>(order[static_cast<std::size_t>(i)]);
  return t;
}

LabelMap random_labels(Index n, Index h, Index w, int classes, std::mt19937_64& rng) {
  LabelMap l(n, h, w);
  std::uniform_int_distribution<int> d(0, classes - 1);
  for (auto& v : l.data) v = static_cast<std::uint8_t>(d(rng));
  return l;
}

// Projects a tensor-valued op to a scalar with fixed random weights.
Var project(const Var& y, const Tensor& weights) { return sum(y * y.graph().constant(weights)); }

GradientCase check(std::string name, const LossBuilder& builder, std::vector<Tensor> inputs, double eps,
                   const LossBuilder* numeric = nullptr) {
  return {std::move(name), grad_check(builder, inputs, eps, numeric)};
}

}  // namespace

std::vector<GradientCase> run_gradient_suite(std::uint64_t seed, double eps) {
  std::mt19937_64 rng(seed);
  const double margin = 10.0 * eps;
  std::vector<GradientCase> cases;

  {
    const Shape xs{2, 2, 5, 5};
    const Tensor proj3 = uniform({2, 3, 5, 5}, rng, -1, 1);
    cases.push_back(check(
        "conv2d",
        [&](Graph&, std::span<const Var> v) { return project(conv2d(v[0], v[1], v[2], {1, 1, 1}), proj3); },
        {uniform(xs, rng, -2, 2), uniform({3, 2, 3, 3}, rng, -2, 2), uniform({3, 1, 1, 1}, rng, -2, 2)}, eps));
    const Tensor proj_dil = uniform({2, 3, 5, 5}, rng, -1, 1);
    cases.push_back(check(
        "conv2d(dilation=2)",
        [&](Graph&, std::span<const Var> v) { return project(conv2d(v[0], v[1], v[2], {1, 2, 2}), proj_dil); },
        {uniform(xs, rng, -2, 2), uniform({3, 2, 3, 3}, rng, -2, 2), uniform({3, 1, 1, 1}, rng, -2, 2)}, eps));
    const Tensor proj_stride = uniform({2, 3, 3, 3}, rng, -1, 1);
    cases.push_back(check(
        "conv2d(stride=2)",
        [&](Graph&, std::span<const Var> v) { return project(conv2d(v[0], v[1], v[2], {2, 1, 1}), proj_stride); },
        {uniform(xs, rng, -2, 2), uniform({3, 2, 3, 3}, rng, -2, 2), uniform({3, 1, 1, 1}, rng, -2, 2)}, eps));
  }

  const Shape es{2, 3, 4, 4};
  const Tensor proj = uniform(es, rng, -1, 1);
  auto unary = [&](std::string name, auto op, Tensor input) {
    cases.push_back(
        check(std::move(name), [&, op](Graph&, std::span<const Var> v) { return project(op(v[0]), proj); },
              {std::move(input)}, eps));
  };
  unary("power_transform(neg)", [](const Var& x) { return neg(x); }, uniform(es, rng, -2, 2));
  unary("power_transform(reciprocal)", [](const Var& x) { return power_transform(x, 1.0, 0.125, -1.0); },
        uniform(es, rng, 0.05, 2));
  unary("power_transform(square)", [](const Var& x) { return power_transform(x, 0.5, 0.25, 2.0); },
        uniform(es, rng, -2, 2));
  unary("power_transform(sqrt)", [](const Var& x) { return power_transform(x, 2.0, 0.5, 0.5); },
        uniform(es, rng, 0.1, 2));
  unary("relu", [](const Var& x) { return relu(x); }, away_from_zero(es, rng, margin));
  unary("sigmoid", [](const Var& x) { return sigmoid(x); }, uniform(es, rng, -2, 2));
  unary("max_pool2d", [](const Var& x) { return max_pool2d(x, 2, 2); }, distinct({2, 3, 8, 8}, rng));
  // max_pool2d output is (2,3,4,4), matching `proj`.

  auto binary = [&](std::string name, auto op) {
    cases.push_back(check(
        std::move(name), [&, op](Graph&, std::span<const Var> v) { return project(op(v[0], v[1]), proj); },
        {uniform(es, rng, -2, 2), uniform(es, rng, -2, 2)}, eps));
  };
  binary("add", [](const Var& a, const Var& b) { return a + b; });
  binary("sub", [](const Var& a, const Var& b) { return a - b; });
  binary("mul", [](const Var& a, const Var& b) { return a * b; });
  unary("mul(x,x)", [](const Var& x) { return x * x; }, uniform(es, rng, -2, 2));

  {
    LabelMap labels = random_labels(2, 4, 4, 3, rng);
    labels(0, 1, 2) = kIgnoreLabel;
    labels(1, 3, 0) = kIgnoreLabel;
    cases.push_back(check(
        "softmax_cross_entropy",
        [labels](Graph&, std::span<const Var> v) { return softmax_cross_entropy(v[0], labels); },
        {uniform(es, rng, -2, 2)}, eps));
  }
  cases.push_back(check("sum", [](Graph&, std::span<const Var> v) { return sum(v[0]); }, {uniform(es, rng, -2, 2)},
                        eps));

  // Full objective on a reduced network: every parameter is probed.
  const Tensor image = uniform({2, 3, 8, 8}, rng, 0, 1);
  LabelMap labels = random_labels(2, 8, 8, 3, rng);
  labels(0, 0, 0) = kIgnoreLabel;
  for (Variant variant : {Variant::baseline, Variant::dual_branch, Variant::ran_s, Variant::ran_n}) {
    for (bool stop_grad : {false, true}) {
      RanConfig cfg;
      cfg.variant = variant;
      cfg.num_classes = 3;
      cfg.backbone_channels = {3, 4, 4, 5};
      cfg.stop_grad_attention = stop_grad;
      cfg.seed = seed + 17;
      const RanModel model(cfg);

      std::vector<Tensor> inputs;
      for (const auto& p : model.parameters()) inputs.push_back(p.value);

      auto objective = [&model, &image, &labels](const BranchOptions& options) -> LossBuilder {
        return [&model, &image, &labels, options](Graph& g, std::span<const Var> v) {
          const BoundModel bound{&model, std::vector<Var>(v.begin(), v.end())};
          return total_loss(forward(bound, g.constant(image), options), labels, model.config()).total;
        };
      };
      const LossBuilder autodiff = objective({});

      // With the stop-gradient, autodiff differentiates the objective with the
      // mask frozen at its current value; the finite differences must see the same.
      LossBuilder frozen;
      if (stop_grad && model.config().has_reverse_branch()) {
        Graph g;
        const BranchVars out = forward(bind(g, model, false), g.constant(image));
        frozen = objective(BranchOptions{out.attention.value()});
      }
      std::string name = "total_loss[" + std::string(variant_name(variant)) +
                         ",stop_grad=" + (stop_grad ? "on" : "off") + "]";
      cases.push_back(check(std::move(name), autodiff, std::move(inputs), eps, frozen ? &frozen : nullptr));
    }
  }
  return cases;
}

}  // namespace ran
