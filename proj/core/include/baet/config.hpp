#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace baet {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Model and training hyperparameters. Defaults are the published settings.
struct Hyperparams {
  std::size_t d = 128;             ///< embedding / hidden width
  double mu = 0.6;                 ///< root-aware fusion weight
  std::size_t max_len = 30;        ///< L_m
  double learning_rate = 0.005;
  double l2 = 1e-3;
  double dropout = 0.5;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::size_t folds = 5;
  std::uint64_t seed = 42;
  std::size_t min_count = 1;       ///< vocabulary frequency threshold
  std::size_t patience = 0;        ///< early stopping; 0 disables

  void validate() const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// Sub-module switches for one side (post tree or author tree).
struct TreeAblation {
  bool tnp = true;
  bool ral = true;
  bool trvnn = true;
  bool tal = true;
  friend bool operator==(const TreeAblation&, const TreeAblation&) = default;
};

struct AblationConfig {
  bool use_post_tree = true;
  bool use_author_tree = true;
  TreeAblation post;
  TreeAblation author;

  /// Throws ConfigError when both trees are disabled.
  void validate() const;
  bool is_full() const { return *this == AblationConfig{}; }
  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

nlohmann::json to_json(const Hyperparams& h);
nlohmann::json to_json(const AblationConfig& a);
Hyperparams hyperparams_from_json(const nlohmann::json& j);
AblationConfig ablation_from_json(const nlohmann::json& j);

}  // namespace baet
