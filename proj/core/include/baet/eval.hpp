#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "baet/autodiff/gradcheck.hpp"
#include "baet/ingest.hpp"
#include "baet/metrics.hpp"
#include "baet/model.hpp"
#include "baet/train.hpp"

namespace baet::eval {

/// Seed and configuration digest stamped on every emitted table.
struct RunInfo {
  std::uint64_t seed = 0;
  std::string config_digest;
};

// ---------------------------------------------------------------------------
// Ablations

struct AblationVariant {
  std::string side;  ///< "full", "post" or "author"
  std::string name;  ///< e.g. "w/o RAL"
  AblationConfig config;
};

/// The full model followed by seven post-side and seven author-side variants.
std::vector<AblationVariant> ablation_variants();

struct AblationRow {
  AblationVariant variant;
  Metrics mean;
  std::uint64_t fold_hash = 0;
};

/// Cross-validates every variant on one shared partition.
std::vector<AblationRow> ablation_matrix(std::span<const AdhocEventTree> events,
                                         const train::TrainConfig& base, std::size_t jobs = 0);

void write_ablation_table(std::span<const AblationRow> rows, const RunInfo& info, std::ostream& out);

// ---------------------------------------------------------------------------
// Post-count buckets

inline constexpr double kOpenEnd = std::numeric_limits<double>::infinity();

/// Lower edges are inclusive; the last edge is normally kOpenEnd.
std::vector<double> default_bucket_edges();

struct Bucket {
  double lower = 0;
  double upper = 0;
  std::size_t count = 0;
  std::optional<double> accuracy;  ///< empty when count == 0
};

/// Throws std::invalid_argument unless edges has at least two strictly increasing values.
std::vector<Bucket> bucket_by_post_count(const model::TrainedModel& model,
                                         std::span<const AdhocEventTree> events,
                                         std::span<const double> edges);
/// Same from precomputed predictions (one per event).
std::vector<Bucket> bucket_by_post_count(std::span<const AdhocEventTree> events,
                                         std::span<const Label> predicted, std::span<const double> edges);

void write_bucket_table(std::span<const Bucket> buckets, const RunInfo& info, std::ostream& out);

// ---------------------------------------------------------------------------
// Attention export

struct AttentionNode {
  std::string node_id;
  std::size_t index = 0;  ///< chronological position
  std::optional<std::string> parent_id;
  double alpha = 0.0;
};

struct AttentionRecord {
  std::string event_id;
  std::string tree;  ///< "post" or "author"
  std::vector<AttentionNode> nodes;
  Label label = Label::rumor;
  Label prediction = Label::rumor;
};

/// One record per enabled tree that aggregates with tree attention.
std::vector<AttentionRecord> export_attention(const model::TrainedModel& model, const AdhocEventTree& event);

nlohmann::json to_json(const AttentionRecord& record, const RunInfo& info);

// ---------------------------------------------------------------------------
// Synthetic corpora

class InvalidSpec : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SyntheticSpec {
  std::size_t events = 200;
  double rumor_fraction = 0.5;        ///< rounded to an exact rumor count
  std::string marker = "unverified";  ///< cue word injected into rumor claims
  double marker_probability = 0.9;
  std::size_t min_replies = 3;
  std::size_t max_replies = 10;
  std::size_t max_children = 3;  ///< branching bound per node
  std::size_t max_depth = 4;
  std::size_t words_per_post = 6;
  double question_rate_rumor = 0.6;     ///< chance a rumor reply ends with '?'
  double question_rate_non_rumor = 0.1;
  double author_signal = 0.9;  ///< chance an author profile follows its class pattern
  std::uint64_t seed = 7;

  void validate() const;
};

/// Deterministic given spec.seed; exactly round(events * rumor_fraction) rumors.
std::vector<AdhocEventTree> generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Gradient check on a random event

struct GradCheckSetup {
  std::size_t d = 8;
  std::size_t nodes = 5;
  std::size_t max_len = 6;
  std::uint64_t seed = 1;
  double eps = 1e-5;
  AblationConfig ablation;
};

/// Builds one random event and checks every parameter of the network
/// (cross-entropy plus L2 penalty, eval mode).
ad::GradCheckReport gradient_check(const GradCheckSetup& setup);

}  // namespace baet::eval
