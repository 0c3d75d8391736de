#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "baet/autodiff/parameters.hpp"
#include "baet/config.hpp"
#include "baet/features.hpp"
#include "baet/ingest.hpp"
#include "baet/metrics.hpp"
#include "baet/model.hpp"

namespace baet::train {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t epoch, std::size_t batch)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

class TooFewSamples : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;

  AdamState() = default;
  explicit AdamState(const ad::ParameterSet& params);
};

/// One bias-corrected Adam update. Throws NonFiniteGradient before touching anything.
void adam_step(ad::ParameterSet& params, const ad::GradientSet& grads, AdamState& state, double lr);

// ---------------------------------------------------------------------------
// Folds

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  friend bool operator==(const Fold&, const Fold&) = default;
};

/// Stratified k-fold partition. Each class is shuffled with `seed` and dealt round-robin
/// over the folds, rumors first.
std::vector<Fold> kfold_split(std::span<const Label> labels, std::size_t k, std::uint64_t seed);
std::vector<Fold> kfold_split(std::span<const AdhocEventTree> events, std::size_t k, std::uint64_t seed);

/// Stable 64-bit digest of a partition (FNV-1a over the test indices).
std::uint64_t fold_hash(std::span<const Fold> folds);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  Hyperparams hyper;
  AblationConfig ablation;
  FeatureCaps caps;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// 16 hex digits identifying a configuration (FNV-1a of its canonical JSON).
std::string config_digest(const TrainConfig& config);

struct LossRecord {
  std::size_t epoch = 0;
  std::string split;  ///< "train" or "validation"
  double loss = 0.0;  ///< mean cross-entropy, penalty excluded
  double accuracy = 0.0;
};

struct TrainResult {
  model::TrainedModel model;
  std::vector<LossRecord> trace;
  std::size_t best_epoch = 0;
};

/// Trains on `events`. Epoch 0 of the trace is the initial model scored in eval mode;
/// later epochs report the running training loss. With hyper.patience > 0 a validation
/// set is used (a stratified tenth of `events` if `validation` is empty) and the best
/// validation epoch is returned.
TrainResult train_model(std::span<const AdhocEventTree> events, const TrainConfig& config,
                        std::span<const AdhocEventTree> validation = {});

std::vector<model::Prediction> predict_all(const model::TrainedModel& model,
                                           std::span<const AdhocEventTree> events);
Metrics evaluate(const model::TrainedModel& model, std::span<const AdhocEventTree> events);

/// Model directory layout: params.ckpt (checkpoint), vocab.txt, config.json.
void save_model(const model::TrainedModel& model, const std::filesystem::path& dir);
model::TrainedModel load_model(const std::filesystem::path& dir);
TrainConfig config_from_json(const nlohmann::json& j);

void write_trace(std::span<const LossRecord> trace, std::ostream& out);

// ---------------------------------------------------------------------------
// Experiments

/// Runs fn(0..n-1) on up to `jobs` threads. Exceptions are rethrown in index order.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Worker count to use when the caller passes 0.
std::size_t default_jobs();

struct CvResult {
  std::vector<Fold> folds;
  std::uint64_t fold_hash = 0;
  std::vector<Metrics> fold_metrics;
  std::vector<std::vector<LossRecord>> traces;
  Metrics mean;
};

CvResult cross_validate(std::span<const AdhocEventTree> events, const TrainConfig& config,
                        std::size_t jobs = 0);
/// Same with a fixed partition (used to hold folds constant across variants).
CvResult cross_validate(std::span<const AdhocEventTree> events, const TrainConfig& config,
                        std::span<const Fold> folds, std::size_t jobs = 0);

struct GridSpec {
  std::vector<std::size_t> d;
  std::vector<double> mu;
  std::vector<double> learning_rate;
  std::vector<double> l2;

  /// A grid holding only the values of `base`.
  static GridSpec single(const Hyperparams& base);
  std::size_t size() const { return d.size() * mu.size() * learning_rate.size() * l2.size(); }
};

struct GridRow {
  Hyperparams hyper;
  Metrics mean;
  std::uint64_t fold_hash = 0;
};

struct GridResult {
  Hyperparams best;
  std::vector<GridRow> rows;  ///< in grid order: d, mu, lr, l2 (last varies fastest)
};

/// Scores every grid point by k-fold mean accuracy; ties go to higher F1, then smaller d.
GridResult grid_search(std::span<const AdhocEventTree> events, const GridSpec& grid,
                       const TrainConfig& base, std::size_t jobs = 0);

void write_grid_table(const GridResult& result, std::ostream& out);

}  // namespace baet::train
