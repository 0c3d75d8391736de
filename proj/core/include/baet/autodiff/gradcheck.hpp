#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "baet/autodiff/parameters.hpp"

namespace baet::ad {

/// Builds a scalar loss on binding.graph() from the bound parameters.
using LossBuilder = std::function<Var(ParameterBinding&)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares backward() against central differences on every coordinate of `params`.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8). Parameters are restored on return.
GradCheckReport grad_check(const LossBuilder& build, ParameterSet& params, double eps = 1e-5);

}  // namespace baet::ad
