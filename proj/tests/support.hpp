#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "baet/autodiff/tensor.hpp"
#include "baet/ingest.hpp"

namespace testing {

inline baet::ad::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                      double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  baet::ad::Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

inline nlohmann::json author(std::int64_t followers = 10, bool verified = false, std::int64_t created = 0) {
  return {{"followers", followers}, {"friends", 5},      {"favorites", 3},          {"reposts", 1},
          {"statuses", 100},        {"verified", verified}, {"geo_enabled", false}, {"time_zone_enabled", true},
          {"account_created", created}};
}

struct NodeSpec {
  std::string id;
  std::optional<std::string> parent;
  std::int64_t ts = 0;
  std::string text = "some text";
  bool with_author = true;
};

inline nlohmann::json record(const std::string& event_id, int label, const std::vector<NodeSpec>& nodes) {
  nlohmann::json ns = nlohmann::json::array();
  for (const auto& n : nodes) {
    ns.push_back({{"node_id", n.id},
                  {"parent_id", n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr)},
                  {"text", n.text},
                  {"timestamp", n.ts},
                  {"author", n.with_author ? author() : nlohmann::json(nullptr)}});
  }
  return {{"event_id", event_id}, {"label", label}, {"nodes", ns}};
}

/// Star of n replies under the root, one second apart.
inline baet::AdhocEventTree star(std::size_t n, int label = 0, const std::string& id = "e") {
  std::vector<NodeSpec> nodes{{"r", std::nullopt, 100, "root claim text"}};
  for (std::size_t i = 1; i <= n; ++i) nodes.push_back({"c" + std::to_string(i), "r", 100 + static_cast<std::int64_t>(i)});
  return baet::parse_event(record(id, label, nodes));
}

/// Chain root -> c1 -> c2 ... of n replies.
inline baet::AdhocEventTree chain(std::size_t n, int label = 0, const std::string& id = "e") {
  std::vector<NodeSpec> nodes{{"n0", std::nullopt, 100, "root claim text"}};
  for (std::size_t i = 1; i <= n; ++i)
    nodes.push_back({"n" + std::to_string(i), "n" + std::to_string(i - 1), 100 + static_cast<std::int64_t>(i)});
  return baet::parse_event(record(id, label, nodes));
}

/// Largest |a - b| / max(1, |a|, |b|) over two equally sized tensors.
inline double max_scaled_diff(const baet::ad::Tensor& a, const baet::ad::Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace testing
