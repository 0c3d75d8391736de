#include "baet/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace baet::ad {

namespace {

double evaluate(const LossBuilder& build, const ParameterSet& params) {
  Graph g;
  ParameterBinding binding(g, params);
  const Var loss = build(binding);
  const Tensor& v = g.value(loss);
  if (v.size() != 1) throw NotScalarLoss("grad_check: loss must be 1x1, got " + v.shape_string());
  if (!std::isfinite(v[0])) throw NonFiniteLoss("grad_check: loss is not finite");
  return v[0];
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, ParameterSet& params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");

  GradientSet analytic(params);
  {
    Graph g;
    ParameterBinding binding(g, params);
    const Var loss = build(binding);
    g.backward(loss);
    binding.collect(analytic);
  }

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& value = params.value(p);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double up = evaluate(build, params);
      value[i] = saved - eps;
      const double down = evaluate(build, params);
      value[i] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (report.worst_parameter.empty() || rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = params.name(p);
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace baet::ad
