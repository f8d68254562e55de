#include "ran/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ran {
namespace {

double evaluate(const LossBuilder& builder, std::span<const Tensor> inputs) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(g.constant(t));
  const Var loss = builder(g, vars);
  if (loss.value().size() != 1) throw UsageError("grad_check: loss must be a scalar");
  return loss.value().data[0];
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const LossBuilder& builder, std::span<const Tensor> inputs, double eps,
                           const LossBuilder* numeric) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(g.parameter(t));
  const Var loss = builder(g, vars);
  if (loss.value().size() != 1) throw UsageError("grad_check: loss must be a scalar");
  g.backward(loss);

  const LossBuilder& fd = numeric ? *numeric : builder;
  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  GradCheckReport report;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const ArrayXd analytic = vars[i].value().grad ? *vars[i].value().grad : ArrayXd::Zero(probe[i].size());
    for (Index e = 0; e < probe[i].size(); ++e) {
      const double original = probe[i].data[e];
      probe[i].data[e] = original + eps;
      const double plus = evaluate(fd, probe);
      probe[i].data[e] = original - eps;
      const double minus = evaluate(fd, probe);
      probe[i].data[e] = original;

      const double estimate = (plus - minus) / (2.0 * eps);
      const double err = relative_error(analytic[e], estimate);
      ++report.elements_checked;
      if (err > report.max_rel_error || report.elements_checked == 1) {
        report.max_rel_error = err;
        report.worst_input = i;
        report.worst_element = e;
        report.analytic = analytic[e];
        report.numeric = estimate;
      }
    }
  }
  return report;
}

double grad_check(const SingleLossBuilder& builder, const Tensor& input, double eps) {
  const LossBuilder wrapped = [&builder](Graph& g, std::span<const Var> v) { return builder(g, v[0]); };
  return grad_check(wrapped, std::span<const Tensor>(&input, 1), eps).max_rel_error;
}

}  // namespace ran
