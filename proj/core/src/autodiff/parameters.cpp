#include "baet/autodiff/parameters.hpp"

#include <stdexcept>

namespace baet::ad {

std::size_t ParameterSet::add(std::string name, Tensor value, ParamKind kind) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  names_.push_back(std::move(name));
  kinds_.push_back(kind);
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::optional<std::size_t> ParameterSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

std::size_t ParameterSet::index(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

std::size_t ParameterSet::coordinate_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

GradientSet::GradientSet(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    grads_.emplace_back(params.value(i).rows(), params.value(i).cols());
  }
}

void GradientSet::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void GradientSet::scale(double s) {
  for (auto& g : grads_)
    for (double& v : g.values()) v *= s;
}

ParameterBinding::ParameterBinding(Graph& graph, const ParameterSet& params)
    : graph_(&graph), params_(&params), vars_(params.size()) {}

Var ParameterBinding::operator[](std::size_t index) {
  Var& v = vars_.at(index);
  if (!v.valid()) {
    v = graph_->parameter(params_->value(index), params_->kind(index) == ParamKind::embedding);
  }
  return v;
}

void ParameterBinding::collect(GradientSet& out) const {
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (vars_[i].valid()) graph_->accumulate_grad(vars_[i], out[i]);
  }
}

}  // namespace baet::ad
