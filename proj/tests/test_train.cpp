#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "baet/eval.hpp"
#include "baet/train.hpp"
#include "support.hpp"

using namespace baet;
using namespace baet::train;
using ad::Tensor;

namespace {

TrainConfig tiny_config(std::size_t epochs = 2) {
  TrainConfig c;
  c.hyper.d = 4;
  c.hyper.max_len = 6;
  c.hyper.epochs = epochs;
  c.hyper.batch_size = 4;
  c.hyper.folds = 3;
  c.hyper.dropout = 0.2;
  return c;
}

std::vector<AdhocEventTree> small_corpus(std::size_t n = 24, std::uint64_t seed = 3) {
  eval::SyntheticSpec s;
  s.events = n;
  s.max_replies = 4;
  s.seed = seed;
  return eval::generate_synthetic(s);
}

std::vector<Label> labels_of(std::size_t rumors, std::size_t non_rumors) {
  std::vector<Label> l(rumors, Label::rumor);
  l.insert(l.end(), non_rumors, Label::non_rumor);
  return l;
}

}  // namespace

TEST_CASE("Adam leaves parameters alone under a zero gradient") {
  ad::ParameterSet p;
  p.add("w", Tensor::row({1, -2, 3}));
  const ad::ParameterSet before = p;
  AdamState s(p);
  ad::GradientSet g(p);
  for (int i = 0; i < 5; ++i) adam_step(p, g, s, 0.1);
  CHECK(p == before);
  CHECK(s.step == 5);
}

TEST_CASE("first Adam step moves each coordinate by about lr against the gradient") {
  ad::ParameterSet p;
  p.add("w", Tensor::row({1, -2, 3, 0}));
  AdamState s(p);
  ad::GradientSet g(p);
  g[0] = Tensor::row({0.5, -10, 1e-3, 0});
  adam_step(p, g, s, 0.01);
  CHECK(p.value(0)(0, 0) == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(p.value(0)(0, 1) == doctest::Approx(-1.99).epsilon(1e-6));
  CHECK(p.value(0)(0, 2) == doctest::Approx(2.99).epsilon(1e-4));
  CHECK(p.value(0)(0, 3) == 0.0);

  g[0](0, 0) = std::nan("");
  const ad::ParameterSet snapshot = p;
  CHECK_THROWS_AS(adam_step(p, g, s, 0.01), NonFiniteGradient);
  CHECK(p == snapshot);
}

TEST_CASE("stratified folds") {
  SUBCASE("ten events, five folds: one of each class per test fold") {
    const auto labels = labels_of(5, 5);
    const auto folds = kfold_split(labels, 5, 1);
    REQUIRE(folds.size() == 5);
    std::multiset<std::size_t> seen;
    for (const auto& f : folds) {
      REQUIRE(f.test.size() == 2);
      CHECK(labels[f.test[0]] != labels[f.test[1]]);
      CHECK(f.train.size() == 8);
      seen.insert(f.test.begin(), f.test.end());
    }
    CHECK(seen.size() == 10);
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 10);
  }
  SUBCASE("uneven sizes differ by at most one") {
    const auto labels = labels_of(150, 147);
    const auto folds = kfold_split(labels, 5, 9);
    std::vector<std::size_t> sizes;
    for (const auto& f : folds) sizes.push_back(f.test.size());
    CHECK(sizes == std::vector<std::size_t>{60, 60, 59, 59, 59});
  }
  SUBCASE("deterministic in the seed") {
    const auto labels = labels_of(20, 13);
    CHECK(kfold_split(labels, 4, 5) == kfold_split(labels, 4, 5));
    CHECK(fold_hash(kfold_split(labels, 4, 5)) == fold_hash(kfold_split(labels, 4, 5)));
    CHECK(fold_hash(kfold_split(labels, 4, 5)) != fold_hash(kfold_split(labels, 4, 6)));
  }
  SUBCASE("partition property over random inputs") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t k = 2 + rng() % 6;
      const std::size_t n = k + rng() % 40;
      std::vector<Label> labels(n);
      for (auto& l : labels) l = rng() % 3 == 0 ? Label::rumor : Label::non_rumor;
      const auto folds = kfold_split(labels, k, rng());
      std::vector<int> hits(n, 0);
      for (const auto& f : folds) {
        CHECK(f.train.size() + f.test.size() == n);
        CHECK(std::is_sorted(f.test.begin(), f.test.end()));
        for (std::size_t i : f.test) ++hits[i];
        std::vector<std::size_t> both;
        std::set_intersection(f.train.begin(), f.train.end(), f.test.begin(), f.test.end(),
                              std::back_inserter(both));
        CHECK(both.empty());
      }
      CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    }
  }
  SUBCASE("too few samples") {
    CHECK_THROWS_AS(kfold_split(labels_of(2, 2), 5, 1), TooFewSamples);
    CHECK_THROWS_AS(kfold_split(labels_of(3, 3), 1, 1), TooFewSamples);
  }
}

TEST_CASE("training is deterministic and starts near chance") {
  const auto events = small_corpus();
  const auto config = tiny_config(3);
  const TrainResult a = train_model(events, config);
  const TrainResult b = train_model(events, config);
  CHECK(a.model.params == b.model.params);
  REQUIRE(a.trace.size() == 4);
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].epoch == i);
    CHECK(a.trace[i].loss == b.trace[i].loss);
    CHECK(std::isfinite(a.trace[i].loss));
  }
  CHECK(a.trace[0].loss == doctest::Approx(std::log(2.0)).epsilon(0.15 / std::log(2.0)));
  CHECK(a.best_epoch == 3);

  TrainConfig other = config;
  other.hyper.seed = 43;
  CHECK_FALSE(train_model(events, other).model.params == a.model.params);
}

TEST_CASE("training loss falls on a separable corpus") {
  const auto events = small_corpus(40, 5);
  TrainConfig config = tiny_config(12);
  config.hyper.d = 8;
  config.hyper.dropout = 0.0;
  const TrainResult r = train_model(events, config);
  CHECK(r.trace.back().loss < r.trace.front().loss);
  CHECK(evaluate(r.model, events).accuracy >= 0.8);
}

TEST_CASE("the vocabulary only contains training words") {
  auto events = small_corpus(12);
  auto held = events.back();
  held.nodes[0].text = "zanzibar quixotic";
  const std::vector<AdhocEventTree> train_only(events.begin(), events.end() - 1);
  const TrainResult r = train_model(train_only, tiny_config(1));
  CHECK(r.model.vocab.index("zanzibar") == kUnknownIndex);
  CHECK(r.model.vocab.index("quixotic") == kUnknownIndex);
  const auto p = predict_all(r.model, std::span(&held, 1));
  CHECK(p[0].probs[0] + p[0].probs[1] == doctest::Approx(1.0));
}

TEST_CASE("early stopping keeps the best validation epoch") {
  const auto events = small_corpus(30);
  TrainConfig config = tiny_config(6);
  config.hyper.patience = 2;
  const TrainResult r = train_model(events, config);
  std::size_t val_rows = 0;
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& rec : r.trace) {
    if (rec.split != "validation") continue;
    ++val_rows;
    if (rec.accuracy > best) {
      best = rec.accuracy;
      best_epoch = rec.epoch;
    }
  }
  CHECK(val_rows >= 2);
  CHECK(r.best_epoch == best_epoch);

  CHECK_THROWS_AS(train_model(std::span(events.data(), 1), config), TooFewSamples);
  CHECK_THROWS_AS(train_model({}, tiny_config()), TooFewSamples);
}

TEST_CASE("a diverging run reports the epoch and batch") {
  const auto events = small_corpus(8);
  TrainConfig config = tiny_config(3);
  config.hyper.learning_rate = 1e300;
  config.hyper.dropout = 0.0;
  try {
    train_model(events, config);
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    CHECK(e.epoch() >= 1);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("invalid configurations are rejected before training") {
  const auto events = small_corpus(8);
  TrainConfig c = tiny_config();
  c.hyper.mu = 1.5;
  CHECK_THROWS_AS(train_model(events, c), ConfigError);
  c = tiny_config();
  c.ablation.use_post_tree = c.ablation.use_author_tree = false;
  CHECK_THROWS_AS(train_model(events, c), ConfigError);
}

TEST_CASE("model directories round trip") {
  const auto events = small_corpus(10);
  const TrainResult r = train_model(events, tiny_config(1));
  const auto dir = std::filesystem::temp_directory_path() / "baet_model_test";
  std::filesystem::remove_all(dir);
  save_model(r.model, dir);
  const auto loaded = load_model(dir);
  CHECK(loaded.hyper == r.model.hyper);
  CHECK(loaded.ablation == r.model.ablation);
  CHECK(loaded.vocab == r.model.vocab);
  const auto a = predict_all(r.model, events);
  const auto b = predict_all(loaded, events);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].probs[0] == doctest::Approx(b[i].probs[0]).epsilon(1e-4));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("config digest and JSON round trip") {
  TrainConfig c = tiny_config();
  c.ablation.author.ral = false;
  const TrainConfig back = config_from_json(to_json(c));
  CHECK(back.hyper == c.hyper);
  CHECK(back.ablation == c.ablation);
  CHECK(config_digest(back) == config_digest(c));
  CHECK(config_digest(c).size() == 16);
  c.hyper.mu = 0.2;
  CHECK(config_digest(back) != config_digest(c));
}

TEST_CASE("trace is written as JSON lines") {
  std::ostringstream out;
  const std::vector<LossRecord> trace{{0, "train", 0.69, 0.5}, {1, "train", 0.5, 0.75}};
  write_trace(trace, out);
  std::istringstream in(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("epoch") == n);
    ++n;
  }
  CHECK(n == 2);
}

TEST_CASE("parallel_for visits every index and rethrows the first failure") {
  std::vector<std::atomic<int>> hits(50);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) CHECK(h.load() == 1);
  try {
    parallel_for(10, 3, [](std::size_t i) {
      if (i == 7 || i == 3) throw std::runtime_error("job " + std::to_string(i));
    });
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "job 3");
  }
  CHECK(default_jobs() >= 1);
}

TEST_CASE("cross-validation is independent of the worker count") {
  const auto events = small_corpus(18);
  const auto config = tiny_config(1);
  const CvResult one = cross_validate(events, config, 1);
  const CvResult three = cross_validate(events, config, 3);
  CHECK(one.fold_hash == three.fold_hash);
  CHECK(one.mean == three.mean);
  CHECK(one.fold_metrics.size() == 3);
  CHECK(one.mean.total() == events.size());
}

TEST_CASE("a one-point grid equals plain cross-validation") {
  const auto events = small_corpus(15);
  const auto config = tiny_config(1);
  const GridResult g = grid_search(events, GridSpec::single(config.hyper), config, 1);
  REQUIRE(g.rows.size() == 1);
  CHECK(g.best == config.hyper);
  CHECK(g.rows[0].mean == cross_validate(events, config, 1).mean);

  std::ostringstream out;
  write_grid_table(g, out);
  CHECK(out.str().rfind("d\tmu\tlearning_rate\tl2\taccuracy", 0) == 0);
}

TEST_CASE("grid order and tie-breaking") {
  const auto events = small_corpus(12);
  TrainConfig config = tiny_config(1);
  GridSpec grid = GridSpec::single(config.hyper);
  grid.d = {6, 4};
  grid.mu = {0.2, 0.6};
  CHECK(grid.size() == 4);
  const GridResult g = grid_search(events, grid, config, 2);
  REQUIRE(g.rows.size() == 4);
  CHECK(g.rows[0].hyper.d == 6);
  CHECK(g.rows[0].hyper.mu == 0.2);
  CHECK(g.rows[1].hyper.mu == 0.6);
  CHECK(g.rows[2].hyper.d == 4);
  double best_acc = 0.0;
  for (const auto& row : g.rows) best_acc = std::max(best_acc, row.mean.accuracy);
  const auto winner = std::find_if(g.rows.begin(), g.rows.end(),
                                   [&](const GridRow& r) { return r.hyper == g.best; });
  REQUIRE(winner != g.rows.end());
  CHECK(winner->mean.accuracy == best_acc);
  for (const auto& row : g.rows) {
    if (row.mean.accuracy == best_acc && row.mean.f1 == winner->mean.f1) CHECK(winner->hyper.d <= row.hyper.d);
  }
}
