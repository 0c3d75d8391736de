#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "baet/autodiff/graph.hpp"
#include "baet/autodiff/tensor.hpp"

namespace baet::ad {

enum class ParamKind : unsigned char {
  weight = 0,
  bias = 1,
  embedding = 2,  ///< weight whose gradients arrive as sparse rows
};

/// Ordered collection of named trainable tensors.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value, ParamKind kind = ParamKind::weight);

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  ParamKind kind(std::size_t i) const { return kinds_.at(i); }
  Tensor& value(std::size_t i) { return values_.at(i); }
  const Tensor& value(std::size_t i) const { return values_.at(i); }

  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws std::out_of_range for unknown names.
  std::size_t index(std::string_view name) const;
  const Tensor& operator[](std::string_view name) const { return values_[index(name)]; }
  Tensor& operator[](std::string_view name) { return values_[index(name)]; }
  // p[0] would otherwise bind to string_view(nullptr); use value(i).
  const Tensor& operator[](std::size_t) const = delete;
  Tensor& operator[](std::size_t) = delete;

  std::size_t coordinate_count() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<ParamKind> kinds_;
  std::vector<Tensor> values_;
};

/// Dense gradient buffers matching a ParameterSet.
class GradientSet {
 public:
  GradientSet() = default;
  explicit GradientSet(const ParameterSet& params);

  std::size_t size() const noexcept { return grads_.size(); }
  Tensor& operator[](std::size_t i) { return grads_.at(i); }
  const Tensor& operator[](std::size_t i) const { return grads_.at(i); }
  void zero();
  void scale(double s);

 private:
  std::vector<Tensor> grads_;
};

/// Lazily binds parameters of a set as leaves of one graph.
class ParameterBinding {
 public:
  ParameterBinding(Graph& graph, const ParameterSet& params);

  Var operator[](std::size_t index);
  Var operator[](std::string_view name) { return (*this)[params_->index(name)]; }

  Graph& graph() noexcept { return *graph_; }
  const ParameterSet& params() const noexcept { return *params_; }

  /// out[i] += gradient of every bound parameter (call after backward()).
  void collect(GradientSet& out) const;

 private:
  Graph* graph_;
  const ParameterSet* params_;
  std::vector<Var> vars_;
};

}  // namespace baet::ad
