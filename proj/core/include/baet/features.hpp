#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "baet/autodiff/tensor.hpp"
#include "baet/ingest.hpp"

namespace baet {

inline constexpr std::size_t kPadIndex = 0;
inline constexpr std::size_t kUnknownIndex = 1;
inline constexpr std::size_t kBasicFeatureCount = 10;
inline constexpr std::size_t kHabitFeatureCount = 6;
inline constexpr std::size_t kAuthorFeatureCount = kBasicFeatureCount + kHabitFeatureCount;

class EmptyCorpus : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NegativeInterval : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Lowercases ASCII, splits on whitespace and emits each ASCII punctuation
/// character as its own token.
std::vector<std::string> tokenize_words(std::string_view text);

/// Token vocabulary. Index 0 is padding, 1 is unknown; real tokens start at 2.
class Vocab {
 public:
  Vocab();

  /// Tokens with frequency >= min_count, ordered by descending frequency then alphabetically.
  static Vocab build(std::span<const std::string> corpus, std::size_t min_count = 1);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t index(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  bool contains(std::string_view token) const { return index(token) != kUnknownIndex; }

  /// One token per line; line k holds the token with index k + 2.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void append(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

struct TokenizedPost {
  std::vector<std::size_t> ids;  ///< exactly max_len entries
  std::vector<double> freq;      ///< within-post count of ids[j]; 0 at padding
  std::size_t length = 0;        ///< number of non-padding positions

  bool is_padding(std::size_t j) const { return ids[j] == kPadIndex; }
};

TokenizedPost tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len);

/// ln(s_i - s_0 + 1). Throws NegativeInterval when s_i < s_0.
double timestamp_interval(std::int64_t s_i, std::int64_t s_0);

double jaccard_similarity(const std::set<std::string>& a, const std::set<std::string>& b);

struct FeatureCaps {
  double post_length = 30;
  double word_length = 20;
  double punctuation = 10;
};

using BasicFeatures = std::array<double, kBasicFeatureCount>;
using HabitFeatures = std::array<double, kHabitFeatureCount>;

/// [similarity to claim, post length, max length in tree, mean word length,
///  question marks, exclamation marks], capped per `caps`.
HabitFeatures writing_habit_features(std::string_view post, std::string_view claim,
                                     std::size_t max_tree_length, const FeatureCaps& caps = {});
/// Same, with the tree's maximum post length computed from `tree`.
HabitFeatures writing_habit_features(std::string_view post, std::string_view claim,
                                     const AdhocEventTree& tree, const FeatureCaps& caps = {});

/// [followers, friends, favorites, reposts, statuses, verified, geo, time zone,
///  interval(post), interval(account creation)], both intervals against root_ts.
BasicFeatures basic_features(const RawAuthorProfile& profile, std::int64_t post_ts,
                             std::int64_t root_ts);

/// Per-column (x - min) / (max - min); constant columns become 0. Rows must be non-empty.
ad::Tensor minmax_normalize(const ad::Tensor& raw);

struct AuthorFeatures {
  BasicFeatures basic{};
  HabitFeatures habit{};
};

/// Normalised author features for every node of a tree (normalisation is per tree).
/// Nodes without a profile contribute an all-zero raw basic row.
std::vector<AuthorFeatures> author_features(const AdhocEventTree& tree, const FeatureCaps& caps = {});

/// Everything the network consumes for one event.
struct EncodedEvent {
  std::string event_id;
  Label label = Label::rumor;
  TreeTopology topology;
  std::vector<std::string> node_ids;
  std::vector<TokenizedPost> posts;
  std::vector<AuthorFeatures> authors;

  std::size_t node_count() const { return topology.size(); }
};

EncodedEvent encode_event(const AdhocEventTree& tree, const Vocab& vocab, std::size_t max_len,
                          const FeatureCaps& caps = {});

}  // namespace baet
