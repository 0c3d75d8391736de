#include "baet/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace baet {

using nlohmann::json;

std::string_view to_string(IngestErrorKind kind) {
  switch (kind) {
    case IngestErrorKind::malformed_record: return "MalformedRecord";
    case IngestErrorKind::missing_root: return "MissingRoot";
    case IngestErrorKind::dangling_parent: return "DanglingParent";
    case IngestErrorKind::cycle_detected: return "CycleDetected";
    case IngestErrorKind::non_chronological: return "NonChronological";
    case IngestErrorKind::duplicate_node: return "DuplicateNode";
  }
  return "IngestError";
}

std::size_t AdhocEventTree::depth() const {
  std::vector<std::size_t> level(nodes.size(), 0);
  std::size_t deepest = 0;
  // parents precede children, so one forward pass suffices
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    level[i] = level[parent[i]] + 1;
    deepest = std::max(deepest, level[i]);
  }
  return deepest;
}

namespace {

[[noreturn]] void malformed(const std::string& what) {
  throw IngestError(IngestErrorKind::malformed_record, what);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(where + ": missing field '" + key + "'");
  return *it;
}

std::int64_t require_int(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_integer()) malformed(where + ": field '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::int64_t require_count(const json& obj, const char* key, const std::string& where) {
  const std::int64_t v = require_int(obj, key, where);
  if (v < 0) malformed(where + ": field '" + key + "' must be >= 0");
  return v;
}

bool require_bool(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer() && (v == 0 || v == 1)) return v.get<int>() == 1;
  malformed(where + ": field '" + key + "' must be a boolean");
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) malformed(where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

void warn_unknown(const json& obj, std::initializer_list<std::string_view> known,
                  const std::string& where, std::vector<std::string>* warnings) {
  if (!warnings) return;
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      warnings->push_back(where + ": ignoring unknown field '" + key + "'");
    }
  }
}

RawAuthorProfile parse_author(const json& a, const std::string& where,
                              std::vector<std::string>* warnings) {
  if (!a.is_object()) malformed(where + ": author must be an object or null");
  RawAuthorProfile p;
  p.followers = require_count(a, "followers", where);
  p.friends = require_count(a, "friends", where);
  p.favorites = require_count(a, "favorites", where);
  p.reposts = require_count(a, "reposts", where);
  p.statuses = require_count(a, "statuses", where);
  p.verified = require_bool(a, "verified", where);
  p.geo_enabled = require_bool(a, "geo_enabled", where);
  p.time_zone_enabled = require_bool(a, "time_zone_enabled", where);
  p.account_created = require_int(a, "account_created", where);
  if (auto it = a.find("id"); it != a.end() && !it->is_null()) {
    if (it->is_string()) {
      p.id = it->get<std::string>();
    } else if (it->is_number_integer()) {
      p.id = std::to_string(it->get<std::int64_t>());
    } else {
      malformed(where + ": author id must be a string or integer");
    }
  }
  warn_unknown(a,
               {"followers", "friends", "favorites", "reposts", "statuses", "verified",
                "geo_enabled", "time_zone_enabled", "account_created", "id"},
               where + ".author", warnings);
  return p;
}

}  // namespace

AdhocEventTree parse_event(const json& record, std::vector<std::string>* warnings) {
  if (!record.is_object()) malformed("record must be a JSON object");
  AdhocEventTree tree;
  tree.event_id = require_string(record, "event_id", "event");
  const std::string where = "event " + tree.event_id;
  const std::int64_t label = require_int(record, "label", where);
  if (label != 0 && label != 1) malformed(where + ": label must be 0 (rumor) or 1 (non-rumor)");
  tree.label = static_cast<Label>(label);
  warn_unknown(record, {"event_id", "label", "nodes"}, where, warnings);

  const json& nodes = require(record, "nodes", where);
  if (!nodes.is_array()) malformed(where + ": nodes must be an array");

  std::vector<EventNode> raw;
  raw.reserve(nodes.size());
  for (const json& n : nodes) {
    if (!n.is_object()) malformed(where + ": node must be an object");
    EventNode node;
    node.node_id = require_string(n, "node_id", where);
    const std::string nw = where + " node " + node.node_id;
    const json& parent = require(n, "parent_id", nw);
    if (parent.is_string()) {
      node.parent_id = parent.get<std::string>();
    } else if (!parent.is_null()) {
      malformed(nw + ": parent_id must be a string or null");
    }
    node.text = require_string(n, "text", nw);
    node.timestamp = require_int(n, "timestamp", nw);
    if (auto it = n.find("author"); it != n.end() && !it->is_null()) {
      node.author = parse_author(*it, nw, warnings);
    }
    warn_unknown(n, {"node_id", "parent_id", "text", "timestamp", "author"}, nw, warnings);
    raw.push_back(std::move(node));
  }

  std::unordered_map<std::string, std::size_t> by_id;
  std::size_t root = kNoParent;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!by_id.emplace(raw[i].node_id, i).second) {
      throw IngestError(IngestErrorKind::duplicate_node, where + ": node_id '" + raw[i].node_id +
                                                              "' appears more than once");
    }
    if (!raw[i].parent_id) {
      if (root != kNoParent) {
        throw IngestError(IngestErrorKind::missing_root, where + ": more than one node without parent_id");
      }
      root = i;
    }
  }
  if (root == kNoParent) {
    throw IngestError(IngestErrorKind::missing_root, where + ": no node without parent_id");
  }

  std::vector<std::vector<std::size_t>> kids(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!raw[i].parent_id) continue;
    auto it = by_id.find(*raw[i].parent_id);
    if (it == by_id.end()) {
      throw IngestError(IngestErrorKind::dangling_parent,
                        where + ": parent '" + *raw[i].parent_id + "' of node '" +
                            raw[i].node_id + "' not found");
    }
    if (it->second == i) {
      throw IngestError(IngestErrorKind::cycle_detected, where + ": node '" + raw[i].node_id + "' is its own parent");
    }
    kids[it->second].push_back(i);
  }

  const std::int64_t root_ts = raw[root].timestamp;
  for (const auto& n : raw) {
    if (n.timestamp < root_ts) {
      throw IngestError(IngestErrorKind::non_chronological,
                        where + ": node '" + n.node_id + "' is earlier than the root");
    }
  }

  // Chronological order, ties by node_id, subject to parents preceding children.
  using Key = std::tuple<std::int64_t, std::string, std::size_t>;
  std::priority_queue<Key, std::vector<Key>, std::greater<>> ready;
  ready.emplace(raw[root].timestamp, raw[root].node_id, root);
  std::vector<std::size_t> order;
  order.reserve(raw.size());
  while (!ready.empty()) {
    const std::size_t i = std::get<2>(ready.top());
    ready.pop();
    order.push_back(i);
    for (std::size_t c : kids[i]) ready.emplace(raw[c].timestamp, raw[c].node_id, c);
  }
  if (order.size() != raw.size()) {
    throw IngestError(IngestErrorKind::cycle_detected,
                      where + ": " + std::to_string(raw.size() - order.size()) +
                          " node(s) unreachable from the root");
  }

  std::vector<std::size_t> position(raw.size());
  for (std::size_t k = 0; k < order.size(); ++k) position[order[k]] = k;

  tree.nodes.reserve(raw.size());
  tree.parent.assign(raw.size(), kNoParent);
  tree.children.assign(raw.size(), {});
  for (std::size_t k = 0; k < order.size(); ++k) {
    EventNode& n = raw[order[k]];
    if (k > 0) {
      const std::size_t p = position[by_id.at(*n.parent_id)];
      tree.parent[k] = p;
      tree.children[p].push_back(k);
      if (n.timestamp < raw[order[p]].timestamp) {
        throw IngestError(IngestErrorKind::non_chronological,
                          where + ": node '" + n.node_id + "' is earlier than its parent");
      }
    }
    tree.nodes.push_back(std::move(n));
  }
  for (auto& c : tree.children) std::sort(c.begin(), c.end());
  return tree;
}

AdhocEventTree parse_event_line(std::string_view line, std::vector<std::string>* warnings) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    malformed(std::string("invalid JSON: ") + e.what());
  }
  return parse_event(record, warnings);
}

json to_json(const AdhocEventTree& tree) {
  json nodes = json::array();
  for (const EventNode& n : tree.nodes) {
    json node{{"node_id", n.node_id},
              {"parent_id", n.parent_id ? json(*n.parent_id) : json(nullptr)},
              {"text", n.text},
              {"timestamp", n.timestamp}};
    if (n.author) {
      const RawAuthorProfile& a = *n.author;
      json author{{"followers", a.followers},
                  {"friends", a.friends},
                  {"favorites", a.favorites},
                  {"reposts", a.reposts},
                  {"statuses", a.statuses},
                  {"verified", a.verified},
                  {"geo_enabled", a.geo_enabled},
                  {"time_zone_enabled", a.time_zone_enabled},
                  {"account_created", a.account_created}};
      if (a.id) author["id"] = *a.id;
      node["author"] = std::move(author);
    } else {
      node["author"] = nullptr;
    }
    nodes.push_back(std::move(node));
  }
  return json{{"event_id", tree.event_id}, {"label", to_int(tree.label)}, {"nodes", std::move(nodes)}};
}

std::string serialize_event(const AdhocEventTree& tree) { return to_json(tree).dump(); }

ReadReport read_events(std::istream& in) {
  ReadReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string> warnings;
    try {
      report.events.push_back(parse_event_line(line, &warnings));
    } catch (const IngestError& e) {
      report.errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
    for (auto& w : warnings) report.warnings.push_back("line " + std::to_string(line_no) + ": " + w);
  }
  return report;
}

ReadReport read_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_events(in);
}

void write_events(std::span<const AdhocEventTree> events, std::ostream& out) {
  for (const auto& e : events) out << serialize_event(e) << '\n';
}

void write_events(std::span<const AdhocEventTree> events, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_events(events, out);
}

std::vector<AdhocEventTree> prune_events(std::span<const AdhocEventTree> events) {
  std::vector<AdhocEventTree> kept;
  for (const auto& e : events) {
    if (e.responsive_count() < 3) continue;
    const bool complete = std::all_of(e.nodes.begin(), e.nodes.end(),
                                      [](const EventNode& n) { return n.author.has_value(); });
    if (complete) kept.push_back(e);
  }
  return kept;
}

BipartiteTrees split_bipartite(const AdhocEventTree& tree) {
  BipartiteTrees out;
  out.event_id = tree.event_id;
  out.label = tree.label;
  const TreeTopology topology{tree.parent, tree.children};
  out.post_tree.topology = topology;
  out.author_tree.topology = topology;
  for (const auto& n : tree.nodes) {
    out.post_tree.texts.push_back(n.text);
    out.author_tree.profiles.push_back(n.author);
    out.author_tree.timestamps.push_back(n.timestamp);
  }
  return out;
}

DatasetStats dataset_stats(std::span<const AdhocEventTree> events) {
  DatasetStats s;
  std::set<std::string> authors;
  double reposts = 0.0;
  double depth = 0.0;
  for (const auto& e : events) {
    ++s.claims;
    (e.label == Label::rumor ? s.rumors : s.non_rumors)++;
    s.posts += e.nodes.size();
    reposts += static_cast<double>(e.responsive_count());
    depth += static_cast<double>(e.depth());
    for (const auto& n : e.nodes) {
      if (n.author && n.author->id) {
        authors.insert("a:" + *n.author->id);
      } else {
        authors.insert("p:" + e.event_id + "/" + n.node_id);
      }
    }
  }
  s.authors = authors.size();
  if (s.claims > 0) {
    s.mean_reposts = reposts / static_cast<double>(s.claims);
    s.mean_depth = depth / static_cast<double>(s.claims);
  }
  return s;
}

}  // namespace baet
