#include <doctest.h>

#include <sstream>

#include "baet/ingest.hpp"
#include "support.hpp"

using namespace baet;
using testing::NodeSpec;

namespace {

IngestErrorKind kind_of(const nlohmann::json& rec) {
  try {
    parse_event(rec);
  } catch (const IngestError& e) {
    return e.kind();
  }
  FAIL("record was accepted");
  return IngestErrorKind::malformed_record;
}

}  // namespace

TEST_CASE("parse minimal and star trees") {
  const auto single = parse_event(testing::record("e1", 1, {{"r", std::nullopt, 5}}));
  CHECK(single.responsive_count() == 0);
  CHECK(single.children.size() == 1);
  CHECK(single.children[0].empty());
  CHECK(single.label == Label::non_rumor);
  CHECK(single.depth() == 0);

  const auto s = testing::star(2);
  CHECK(s.children[0] == std::vector<std::size_t>{1, 2});
  CHECK(s.parent[1] == 0);
  CHECK(s.parent[2] == 0);
}

TEST_CASE("propagation tree with a depth-3 chain plus siblings") {
  // r -> a -> b -> c, plus r -> d and a -> e
  const auto t = parse_event(testing::record("fig", 0,
                                             {{"r", std::nullopt, 0},
                                              {"a", "r", 1},
                                              {"d", "r", 2},
                                              {"b", "a", 3},
                                              {"e", "a", 4},
                                              {"c", "b", 5}}));
  std::vector<std::string> ids;
  for (const auto& n : t.nodes) ids.push_back(n.node_id);
  CHECK(ids == std::vector<std::string>{"r", "a", "d", "b", "e", "c"});
  CHECK(t.parent == std::vector<std::size_t>{kNoParent, 0, 0, 1, 1, 3});
  CHECK(t.depth() == 3);
  CHECK(t.is_leaf(2));
  CHECK(t.is_leaf(5));
  CHECK_FALSE(t.is_leaf(1));
}

TEST_CASE("chronological order breaks ties by node_id and keeps parents first") {
  const auto t = parse_event(testing::record("tie", 0,
                                             {{"root", std::nullopt, 10},
                                              {"z", "root", 20},
                                              {"b", "root", 20},
                                              {"a", "z", 20}}));
  std::vector<std::string> ids;
  for (const auto& n : t.nodes) ids.push_back(n.node_id);
  // "a" sorts first but its parent "z" must come before it
  CHECK(ids == std::vector<std::string>{"root", "b", "z", "a"});
}

TEST_CASE("structural errors are classified") {
  CHECK(kind_of(testing::record("x", 0, {{"a", "b", 1}, {"b", "a", 2}})) == IngestErrorKind::missing_root);
  CHECK(kind_of(testing::record("x", 0, {{"r", std::nullopt, 1}, {"a", std::nullopt, 2}})) ==
        IngestErrorKind::missing_root);
  CHECK(kind_of(testing::record("x", 0, {{"r", std::nullopt, 1}, {"a", "ghost", 2}})) ==
        IngestErrorKind::dangling_parent);
  CHECK(kind_of(testing::record("x", 0, {{"r", std::nullopt, 1}, {"a", "b", 2}, {"b", "a", 3}})) ==
        IngestErrorKind::cycle_detected);
  CHECK(kind_of(testing::record("x", 0, {{"r", std::nullopt, 1}, {"a", "a", 2}})) == IngestErrorKind::cycle_detected);
  CHECK(kind_of(testing::record("x", 0, {{"r", std::nullopt, 10}, {"a", "r", 5}})) ==
        IngestErrorKind::non_chronological);
  CHECK(kind_of(testing::record("x", 0, {{"r", std::nullopt, 1}, {"a", "r", 5}, {"b", "a", 3}})) ==
        IngestErrorKind::non_chronological);
  CHECK(kind_of(testing::record("x", 0, {{"r", std::nullopt, 1}, {"r", "r", 2}})) == IngestErrorKind::duplicate_node);
  CHECK(kind_of(testing::record("x", 2, {{"r", std::nullopt, 1}})) == IngestErrorKind::malformed_record);

  auto rec = testing::record("x", 0, {{"r", std::nullopt, 1}});
  rec["nodes"][0]["timestamp"] = "yesterday";
  CHECK(kind_of(rec) == IngestErrorKind::malformed_record);
  rec = testing::record("x", 0, {{"r", std::nullopt, 1}});
  rec["nodes"][0]["author"]["followers"] = -4;
  CHECK(kind_of(rec) == IngestErrorKind::malformed_record);
  rec = testing::record("x", 0, {{"r", std::nullopt, 1}});
  rec["nodes"][0].erase("text");
  CHECK(kind_of(rec) == IngestErrorKind::malformed_record);
  CHECK_THROWS_AS(parse_event_line("{not json"), IngestError);
}

TEST_CASE("unknown fields warn, missing author is allowed") {
  auto rec = testing::record("w", 0, {{"r", std::nullopt, 1, "hi", false}});
  rec["source"] = "crawler";
  std::vector<std::string> warnings;
  const auto t = parse_event(rec, &warnings);
  CHECK(warnings.size() == 1);
  CHECK(warnings[0].find("source") != std::string::npos);
  CHECK_FALSE(t.nodes[0].author.has_value());
}

TEST_CASE("read_events reports bad lines and keeps good ones") {
  std::stringstream in;
  in << testing::record("good", 0, {{"r", std::nullopt, 1}}).dump() << "\n\n"
     << "{broken\n"
     << testing::record("bad", 0, {{"r", std::nullopt, 5}, {"a", "r", 1}}).dump() << '\n';
  const ReadReport r = read_events(in);
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].event_id == "good");
  REQUIRE(r.errors.size() == 2);
  CHECK(r.errors[0].rfind("line 3:", 0) == 0);
  CHECK(r.errors[1].rfind("line 4:", 0) == 0);
  CHECK(r.errors[1].find("NonChronological") != std::string::npos);
}

TEST_CASE("serialize then parse is the identity") {
  std::mt19937_64 rng(21);
  const std::vector<std::string> texts{"plain", "quotes \"inside\"", "tab\tand\nnewline", "caf\xc3\xa9 \xe2\x9c\x93", "",
                                       "what?!"};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = rng() % 8;
    std::vector<NodeSpec> nodes{{"root", std::nullopt, static_cast<std::int64_t>(rng() % 1000)}};
    for (std::size_t i = 1; i <= n; ++i) {
      const std::size_t parent = rng() % i;
      NodeSpec s{"n" + std::to_string(i), nodes[parent].id, nodes[parent].ts + static_cast<std::int64_t>(rng() % 50),
                 texts[rng() % texts.size()], rng() % 5 != 0};
      nodes.push_back(s);
    }
    const auto tree = parse_event(testing::record("ev" + std::to_string(trial), static_cast<int>(rng() % 2), nodes));
    const auto again = parse_event_line(serialize_event(tree));
    CHECK(again == tree);
    CHECK(serialize_event(again) == serialize_event(tree));
    // every node reachable, edges = nodes - 1
    std::size_t edges = 0;
    for (const auto& c : tree.children) edges += c.size();
    CHECK(edges == tree.nodes.size() - 1);
  }
}

TEST_CASE("prune_events") {
  std::vector<AdhocEventTree> events{testing::star(2, 0, "two"), testing::star(3, 0, "three"),
                                     testing::star(5, 1, "five")};
  events.push_back(parse_event(testing::record("missing", 0,
                                               {{"r", std::nullopt, 1},
                                                {"a", "r", 2},
                                                {"b", "r", 3},
                                                {"c", "r", 4, "x", false},
                                                {"d", "r", 5},
                                                {"e", "r", 6}})));
  const auto kept = prune_events(events);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].event_id == "three");
  CHECK(kept[1].event_id == "five");
}

TEST_CASE("split_bipartite copies topology") {
  const auto single = split_bipartite(testing::star(0));
  CHECK(single.post_tree.topology.size() == 1);
  CHECK(single.author_tree.topology.size() == 1);
  CHECK(single.post_tree.topology.children[0].empty());

  const auto tree = testing::star(3);
  const auto b = split_bipartite(tree);
  CHECK(b.post_tree.topology == b.author_tree.topology);
  CHECK(b.post_tree.topology.parent == tree.parent);
  CHECK(b.post_tree.texts[0] == "root claim text");
  CHECK(b.author_tree.timestamps == std::vector<std::int64_t>{100, 101, 102, 103});
}

TEST_CASE("dataset_stats") {
  const DatasetStats empty = dataset_stats({});
  CHECK(empty.claims == 0);
  CHECK(empty.mean_reposts == 0.0);
  CHECK(empty.mean_depth == 0.0);

  std::vector<AdhocEventTree> events{testing::chain(1, 0, "a"), testing::chain(3, 1, "b")};
  const DatasetStats s = dataset_stats(events);
  CHECK(s.claims == 2);
  CHECK(s.rumors == 1);
  CHECK(s.non_rumors == 1);
  CHECK(s.posts == 6);
  CHECK(s.authors == 6);
  CHECK(s.mean_reposts == doctest::Approx(2.0));
  CHECK(s.mean_depth == doctest::Approx(2.0));

  auto rec = testing::record("ids", 0, {{"r", std::nullopt, 1}, {"a", "r", 2}, {"b", "r", 3}});
  rec["nodes"][1]["author"]["id"] = "same";
  rec["nodes"][2]["author"]["id"] = "same";
  const std::vector<AdhocEventTree> shared{parse_event(rec)};
  CHECK(dataset_stats(shared).authors == 2);
}
