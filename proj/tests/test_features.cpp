#include <doctest.h>

#include <filesystem>

#include "baet/features.hpp"
#include "support.hpp"

using namespace baet;

TEST_CASE("tokenize_words lowercases and splits punctuation") {
  CHECK(tokenize_words("Is this TRUE?" "?!") == std::vector<std::string>{"is", "this", "true", "?", "?", "!"});
  CHECK(tokenize_words("  ").empty());
  CHECK(tokenize_words("don't") == std::vector<std::string>{"don", "'", "t"});
}

TEST_CASE("vocabulary ordering and thresholds") {
  const std::vector<std::string> corpus{"a b", "b c"};
  const Vocab v = Vocab::build(corpus);
  CHECK(v.size() == 5);
  CHECK(v.index("b") == 2);
  CHECK(v.index("a") == 3);
  CHECK(v.index("c") == 4);
  CHECK(v.index("zzz") == kUnknownIndex);

  const std::vector<std::string> triple{"a a a"};
  CHECK(Vocab::build(triple).size() == 3);

  const std::vector<std::string> single{"x y z"};
  const Vocab strict = Vocab::build(single, 5);
  CHECK(strict.size() == 2);
  CHECK(strict.index("x") == kUnknownIndex);

  CHECK_THROWS_AS(Vocab::build(std::vector<std::string>{}), EmptyCorpus);

  const auto path = std::filesystem::temp_directory_path() / "baet_vocab_test.txt";
  v.save(path);
  CHECK(Vocab::load(path) == v);
  std::filesystem::remove(path);
}

TEST_CASE("tokenize pads, truncates and counts") {
  const std::vector<std::string> corpus{"really ?"};
  const Vocab v = Vocab::build(corpus);
  const TokenizedPost p = tokenize("really? really?", v, 4);
  CHECK(p.ids == std::vector<std::size_t>{v.index("really"), v.index("?"), v.index("really"), v.index("?")});
  CHECK(p.freq == std::vector<double>{2, 2, 2, 2});
  CHECK(p.length == 4);

  const TokenizedPost empty = tokenize("", v, 5);
  CHECK(empty.ids == std::vector<std::size_t>(5, kPadIndex));
  CHECK(empty.freq == std::vector<double>(5, 0.0));
  CHECK(empty.length == 0);

  std::string forty;
  for (int i = 0; i < 40; ++i) forty += "w" + std::to_string(i) + " ";
  const std::vector<std::string> big{forty};
  const Vocab bv = Vocab::build(big);
  const TokenizedPost t = tokenize(forty, bv, 30);
  CHECK(t.ids.size() == 30);
  CHECK(t.length == 30);
  CHECK(t.ids[29] == bv.index("w29"));
}

TEST_CASE("tokenize keeps freq zero exactly on padding") {
  std::mt19937_64 rng(1);
  const std::vector<std::string> words{"a", "b", "c", "?", "!"};
  const std::vector<std::string> corpus{"a b c ? !"};
  const Vocab v = Vocab::build(corpus);
  for (int trial = 0; trial < 50; ++trial) {
    std::string text;
    const std::size_t n = rng() % 12;
    for (std::size_t i = 0; i < n; ++i) text += words[rng() % words.size()] + " ";
    const std::size_t len = 1 + rng() % 8;
    const TokenizedPost p = tokenize(text, v, len);
    REQUIRE(p.ids.size() == len);
    for (std::size_t j = 0; j < len; ++j) CHECK((p.freq[j] == 0.0) == p.is_padding(j));
  }
}

TEST_CASE("timestamp intervals") {
  CHECK(timestamp_interval(50, 50) == 0.0);
  CHECK(timestamp_interval(0, 0) == 0.0);
  CHECK(timestamp_interval(1, 0) == doctest::Approx(std::log(2.0)));
  CHECK(timestamp_interval(199, 100) == doctest::Approx(4.60517).epsilon(1e-6));
  CHECK_THROWS_AS(timestamp_interval(1, 2), NegativeInterval);
  double prev = -1.0;
  for (std::int64_t dt = 0; dt < 1000; dt += 7) {
    const double v = timestamp_interval(dt, 0);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("jaccard similarity") {
  const std::set<std::string> abc{"a", "b", "c"};
  const std::set<std::string> bcd{"b", "c", "d"};
  const std::set<std::string> xy{"x", "y"};
  CHECK(jaccard_similarity(abc, abc) == 1.0);
  CHECK(jaccard_similarity(abc, xy) == 0.0);
  CHECK(jaccard_similarity(abc, bcd) == doctest::Approx(0.5));
  CHECK(jaccard_similarity(bcd, abc) == jaccard_similarity(abc, bcd));
  CHECK(jaccard_similarity({}, {}) == 0.0);
}

TEST_CASE("writing habit features") {
  const auto claim = writing_habit_features("the claim text", "the claim text", 5);
  CHECK(claim[0] == 1.0);
  CHECK(claim[1] == 3.0);
  CHECK(claim[2] == 5.0);

  const auto empty = writing_habit_features("", "claim", 4);
  CHECK(empty[0] == 0.0);
  CHECK(empty[1] == 0.0);
  CHECK(empty[3] == 0.0);
  CHECK(empty[4] == 0.0);
  CHECK(empty[5] == 0.0);

  const auto punct = writing_habit_features("Is this true?" "?!", "claim", 4);
  CHECK(punct[4] == 2.0);
  CHECK(punct[5] == 1.0);
  CHECK(punct[3] == doctest::Approx((2.0 + 4.0 + 4.0) / 3.0));

  const auto capped = writing_habit_features(std::string(25, '?'), "claim", 99);
  CHECK(capped[4] == 10.0);
  CHECK(capped[2] == 30.0);

  const auto tree = testing::star(2);
  const auto from_tree = writing_habit_features("some text", tree.nodes[0].text, tree);
  CHECK(from_tree[2] == 3.0);
}

TEST_CASE("basic features") {
  RawAuthorProfile p;
  p.verified = true;
  p.account_created = 500;
  const auto f = basic_features(p, 500, 500);
  CHECK(f[8] == 0.0);
  CHECK(f[9] == 0.0);
  CHECK(f[5] == 1.0);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 0.0);
  p.followers = 7;
  p.account_created = 401;
  const auto g = basic_features(p, 600, 500);
  CHECK(g[0] == 7.0);
  CHECK(g[8] == doctest::Approx(std::log(101.0)));
  CHECK(g[9] == doctest::Approx(std::log(100.0)));
}

TEST_CASE("min-max normalisation") {
  const ad::Tensor out = minmax_normalize(ad::Tensor(3, 2, {1, 7, 3, 7, 5, 7}));
  CHECK(out == ad::Tensor(3, 2, {0, 0, 0.5, 0, 1, 0}));
  CHECK(minmax_normalize(ad::Tensor(1, 3, {4, 5, 6})) == ad::Tensor(1, 3));

  std::mt19937_64 rng(4);
  const ad::Tensor r = minmax_normalize(testing::random_tensor(6, 5, rng));
  for (std::size_t c = 0; c < 5; ++c) {
    double lo = 1, hi = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      lo = std::min(lo, r(i, c));
      hi = std::max(hi, r(i, c));
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
  }
}

TEST_CASE("author features are normalised per tree and within [0,1]") {
  const auto tree = testing::star(4);
  const auto feats = author_features(tree);
  REQUIRE(feats.size() == 5);
  for (const auto& f : feats) {
    for (double x : f.basic) CHECK((x >= 0.0 && x <= 1.0));
    for (double x : f.habit) CHECK((x >= 0.0 && x <= 1.0));
  }
  // root's own post interval is the minimum, the last reply the maximum
  CHECK(feats[0].basic[8] == 0.0);
  CHECK(feats[4].basic[8] == 1.0);
  CHECK(feats[0].habit[0] == 1.0);

  const auto single = author_features(testing::star(0));
  for (double x : single[0].basic) CHECK(x == 0.0);
}

TEST_CASE("encode_event keeps node order") {
  const auto tree = testing::chain(3);
  std::vector<std::string> corpus;
  for (const auto& n : tree.nodes) corpus.push_back(n.text);
  const auto e = encode_event(tree, Vocab::build(corpus), 6);
  CHECK(e.node_count() == 4);
  CHECK(e.node_ids == std::vector<std::string>{"n0", "n1", "n2", "n3"});
  CHECK(e.topology.parent == tree.parent);
  CHECK(e.posts[0].ids.size() == 6);
}
