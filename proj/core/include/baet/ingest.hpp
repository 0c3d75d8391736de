#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace baet {

/// Claim label. 0 = rumor, 1 = non-rumor.
enum class Label : int { rumor = 0, non_rumor = 1 };

inline int to_int(Label l) { return static_cast<int>(l); }

struct RawAuthorProfile {
  std::int64_t followers = 0;
  std::int64_t friends = 0;
  std::int64_t favorites = 0;
  std::int64_t reposts = 0;
  std::int64_t statuses = 0;
  bool verified = false;
  bool geo_enabled = false;
  bool time_zone_enabled = false;
  std::int64_t account_created = 0;
  /// Optional author identity ("author.id"); used only for unique-author counts.
  std::optional<std::string> id;

  friend bool operator==(const RawAuthorProfile&, const RawAuthorProfile&) = default;
};

struct EventNode {
  std::string node_id;
  std::optional<std::string> parent_id;
  std::string text;
  std::int64_t timestamp = 0;
  /// Absent when the record carries no author profile (removed by prune_events).
  std::optional<RawAuthorProfile> author;

  friend bool operator==(const EventNode&, const EventNode&) = default;
};

inline constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

/// A labeled claim with its responsive posts. nodes[0] is the root; nodes are in
/// chronological order and every parent precedes its children.
struct AdhocEventTree {
  std::string event_id;
  Label label = Label::rumor;
  std::vector<EventNode> nodes;
  std::vector<std::size_t> parent;                 ///< parent[0] == kNoParent
  std::vector<std::vector<std::size_t>> children;  ///< ascending indices

  /// Number of responsive posts (n).
  std::size_t responsive_count() const { return nodes.empty() ? 0 : nodes.size() - 1; }
  /// Longest root-to-node path length in edges.
  std::size_t depth() const;
  bool is_leaf(std::size_t i) const { return children.at(i).empty(); }

  friend bool operator==(const AdhocEventTree&, const AdhocEventTree&) = default;
};

/// Shared topology of the post tree and the author tree.
struct TreeTopology {
  std::vector<std::size_t> parent;
  std::vector<std::vector<std::size_t>> children;

  std::size_t size() const { return parent.size(); }
  friend bool operator==(const TreeTopology&, const TreeTopology&) = default;
};

struct PostTree {
  TreeTopology topology;
  std::vector<std::string> texts;
};

struct AuthorTree {
  TreeTopology topology;
  std::vector<std::optional<RawAuthorProfile>> profiles;
  std::vector<std::int64_t> timestamps;  ///< posting times, needed by author features
};

struct BipartiteTrees {
  std::string event_id;
  Label label = Label::rumor;
  PostTree post_tree;
  AuthorTree author_tree;
};

enum class IngestErrorKind {
  malformed_record,
  missing_root,
  dangling_parent,
  cycle_detected,
  non_chronological,
  duplicate_node,
};

std::string_view to_string(IngestErrorKind kind);

class IngestError : public std::runtime_error {
 public:
  IngestError(IngestErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  IngestErrorKind kind() const noexcept { return kind_; }

 private:
  IngestErrorKind kind_;
};

/// Validates one canonical record. Unknown fields are reported through `warnings`.
AdhocEventTree parse_event(const nlohmann::json& record,
                           std::vector<std::string>* warnings = nullptr);
AdhocEventTree parse_event_line(std::string_view line, std::vector<std::string>* warnings = nullptr);

nlohmann::json to_json(const AdhocEventTree& tree);
/// One-line canonical record.
std::string serialize_event(const AdhocEventTree& tree);

struct ReadReport {
  std::vector<AdhocEventTree> events;
  std::vector<std::string> errors;    ///< "line N: ..." per rejected record
  std::vector<std::string> warnings;
};

/// Reads a line-delimited canonical event file. Blank lines are skipped.
ReadReport read_events(std::istream& in);
ReadReport read_events(const std::filesystem::path& path);
void write_events(std::span<const AdhocEventTree> events, std::ostream& out);
void write_events(std::span<const AdhocEventTree> events, const std::filesystem::path& path);

/// Keeps trees with at least three responsive posts and an author profile on every node.
std::vector<AdhocEventTree> prune_events(std::span<const AdhocEventTree> events);

BipartiteTrees split_bipartite(const AdhocEventTree& tree);

struct DatasetStats {
  std::size_t claims = 0;
  std::size_t authors = 0;
  std::size_t posts = 0;
  std::size_t rumors = 0;
  std::size_t non_rumors = 0;
  double mean_reposts = 0.0;
  double mean_depth = 0.0;
};

/// Authors are identified by author.id when present, otherwise one author per post.
DatasetStats dataset_stats(std::span<const AdhocEventTree> events);

}  // namespace baet
