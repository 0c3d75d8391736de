#include "baet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

namespace baet::eval {

namespace {

void write_header_comment(const RunInfo& info, std::ostream& out) {
  out << "# seed=" << info.seed << " config_digest=" << info.config_digest << ' ' << kPositiveClassNote
      << '\n';
}

AblationConfig with_side(TreeAblation t, bool post_side) {
  AblationConfig a;
  (post_side ? a.post : a.author) = t;
  return a;
}

}  // namespace

std::vector<AblationVariant> ablation_variants() {
  std::vector<AblationVariant> out;
  out.push_back({"full", "BAET", AblationConfig{}});
  for (bool post_side : {true, false}) {
    const std::string side = post_side ? "post" : "author";
    AblationConfig drop_other;
    (post_side ? drop_other.use_author_tree : drop_other.use_post_tree) = false;
    out.push_back({side, post_side ? "w/o AT" : "w/o PT", drop_other});
    out.push_back({side, "w/o TNP&TRvNN", with_side({false, true, false, true}, post_side)});
    out.push_back({side, "w/o RAL&TAL", with_side({true, false, true, false}, post_side)});
    out.push_back({side, "w/o TNP", with_side({false, true, true, true}, post_side)});
    out.push_back({side, "w/o RAL", with_side({true, false, true, true}, post_side)});
    out.push_back({side, "w/o TRvNN", with_side({true, true, false, true}, post_side)});
    out.push_back({side, "w/o TAL", with_side({true, true, true, false}, post_side)});
  }
  return out;
}

std::vector<AblationRow> ablation_matrix(std::span<const AdhocEventTree> events,
                                         const train::TrainConfig& base, std::size_t jobs) {
  const auto variants = ablation_variants();
  const auto folds = train::kfold_split(events, base.hyper.folds, base.hyper.seed);
  const std::size_t k = folds.size();
  std::vector<train::TrainConfig> configs;
  for (const auto& v : variants) {
    train::TrainConfig c = base;
    c.ablation = v.config;
    c.validate();
    configs.push_back(c);
  }
  std::vector<Metrics> results(variants.size() * k);
  train::parallel_for(results.size(), jobs, [&](std::size_t job) {
    const auto& fold = folds[job % k];
    std::vector<AdhocEventTree> train_set;
    std::vector<AdhocEventTree> test_set;
    for (std::size_t i : fold.train) train_set.push_back(events[i]);
    for (std::size_t i : fold.test) test_set.push_back(events[i]);
    const auto r = train::train_model(train_set, configs[job / k]);
    results[job] = train::evaluate(r.model, test_set);
  });
  const std::uint64_t hash = train::fold_hash(folds);
  std::vector<AblationRow> rows;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::span<const Metrics> mine(results.data() + v * k, k);
    rows.push_back({variants[v], mean_metrics(mine), hash});
  }
  return rows;
}

void write_ablation_table(std::span<const AblationRow> rows, const RunInfo& info, std::ostream& out) {
  write_header_comment(info, out);
  out << "side\tvariant\taccuracy\tprecision\trecall\tf1\tfold_hash\n";
  for (const auto& r : rows) {
    out << r.variant.side << '\t' << r.variant.name << '\t' << r.mean.accuracy << '\t' << r.mean.precision
        << '\t' << r.mean.recall << '\t' << r.mean.f1 << '\t' << std::hex << r.fold_hash << std::dec << '\n';
  }
}

std::vector<double> default_bucket_edges() { return {0, 10, 25, 50, 100, 150, kOpenEnd}; }

std::vector<Bucket> bucket_by_post_count(std::span<const AdhocEventTree> events,
                                         std::span<const Label> predicted, std::span<const double> edges) {
  if (edges.size() < 2) throw std::invalid_argument("bucket edges need at least two values");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw std::invalid_argument("bucket edges must increase strictly");
  if (predicted.size() != events.size()) throw std::invalid_argument("one prediction per event required");

  std::vector<Bucket> buckets;
  std::vector<std::size_t> correct(edges.size() - 1, 0);
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) buckets.push_back({edges[b], edges[b + 1], 0, {}});
  for (std::size_t i = 0; i < events.size(); ++i) {
    const double n = static_cast<double>(events[i].responsive_count());
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      if (n >= buckets[b].lower && n < buckets[b].upper) {
        ++buckets[b].count;
        if (predicted[i] == events[i].label) ++correct[b];
        break;
      }
    }
  }
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    if (buckets[b].count > 0)
      buckets[b].accuracy = static_cast<double>(correct[b]) / static_cast<double>(buckets[b].count);
  }
  return buckets;
}

std::vector<Bucket> bucket_by_post_count(const model::TrainedModel& model,
                                         std::span<const AdhocEventTree> events,
                                         std::span<const double> edges) {
  std::vector<Label> predicted;
  predicted.reserve(events.size());
  for (const auto& e : events) predicted.push_back(model::predict_event(model, e).predicted);
  return bucket_by_post_count(events, predicted, edges);
}

void write_bucket_table(std::span<const Bucket> buckets, const RunInfo& info, std::ostream& out) {
  write_header_comment(info, out);
  out << "lower\tupper\tcount\taccuracy\n";
  for (const auto& b : buckets) {
    out << b.lower << '\t' << (std::isinf(b.upper) ? std::string("inf") : std::to_string(static_cast<long long>(b.upper)))
        << '\t' << b.count << '\t';
    if (b.accuracy) out << *b.accuracy;
    else out << "null";
    out << '\n';
  }
}

std::vector<AttentionRecord> export_attention(const model::TrainedModel& model, const AdhocEventTree& event) {
  const auto p = model::predict_event(model, event);
  std::vector<AttentionRecord> out;
  auto emit = [&](const char* tree, const std::vector<double>& alpha) {
    if (alpha.empty()) return;
    AttentionRecord r{event.event_id, tree, {}, event.label, p.predicted};
    for (std::size_t i = 0; i < event.nodes.size(); ++i)
      r.nodes.push_back({event.nodes[i].node_id, i, event.nodes[i].parent_id, alpha.at(i)});
    out.push_back(std::move(r));
  };
  emit("post", p.post_alpha);
  emit("author", p.author_alpha);
  return out;
}

nlohmann::json to_json(const AttentionRecord& record, const RunInfo& info) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : record.nodes) {
    nodes.push_back({{"node_id", n.node_id},
                     {"index", n.index},
                     {"parent_id", n.parent_id ? nlohmann::json(*n.parent_id) : nlohmann::json(nullptr)},
                     {"alpha", n.alpha}});
  }
  return {{"event_id", record.event_id}, {"tree", record.tree},          {"nodes", nodes},
          {"label", to_int(record.label)},   {"prediction", to_int(record.prediction)},
          {"seed", info.seed},               {"config_digest", info.config_digest}};
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidSpec(std::string(what) + " must be in [0,1]");
  };
  prob(rumor_fraction, "rumor_fraction");
  prob(marker_probability, "marker_probability");
  prob(question_rate_rumor, "question_rate_rumor");
  prob(question_rate_non_rumor, "question_rate_non_rumor");
  prob(author_signal, "author_signal");
  if (events < 1) throw InvalidSpec("events must be >= 1");
  if (max_children < 1 || max_depth < 1 || words_per_post < 1) {
    throw InvalidSpec("max_children, max_depth and words_per_post must be >= 1");
  }
  if (min_replies > max_replies) throw InvalidSpec("min_replies must not exceed max_replies");
  if (marker.empty() || marker.find_first_of(" \t\n") != std::string::npos) {
    throw InvalidSpec("marker must be a single non-empty word");
  }
}

namespace {

constexpr const char* kFiller[] = {
    "the",    "police", "city",   "news",   "report", "today",  "people", "video",  "says",
    "after",  "street", "update", "live",   "photo",  "breaking", "crowd", "official", "near",
    "school", "train",  "night",  "just",   "shared", "story",  "local",  "team",   "about",
    "source", "watch",  "scene",  "again",  "heard",  "world",  "event",  "state",  "media"};

struct Rng {
  std::mt19937_64 gen;
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen); }
  bool chance(double p) { return uniform() < p; }
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(gen);
  }
};

std::string filler_text(Rng& rng, std::size_t words) {
  std::string s;
  constexpr std::size_t n = sizeof(kFiller) / sizeof(kFiller[0]);
  for (std::size_t w = 0; w < words; ++w) {
    if (!s.empty()) s += ' ';
    s += kFiller[rng.between(0, n - 1)];
  }
  return s;
}

// Prominent: verified, large audience. Otherwise an ordinary account.
RawAuthorProfile make_profile(Rng& rng, bool prominent, std::int64_t before, std::size_t id) {
  RawAuthorProfile p;
  p.verified = prominent;
  p.followers = prominent ? rng.between(50'000, 2'000'000) : rng.between(5, 3'000);
  p.friends = rng.between(10, 2'000);
  p.favorites = rng.between(0, 20'000);
  p.reposts = rng.between(0, 5'000);
  p.statuses = prominent ? rng.between(5'000, 80'000) : rng.between(10, 8'000);
  p.geo_enabled = rng.chance(0.4);
  p.time_zone_enabled = rng.chance(0.6);
  p.account_created = before - rng.between(prominent ? 100'000'000 : 1'000'000, 300'000'000);
  p.id = "u" + std::to_string(id);
  return p;
}

}  // namespace

std::vector<AdhocEventTree> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng{std::mt19937_64(spec.seed)};
  const auto rumors = static_cast<std::size_t>(std::llround(static_cast<double>(spec.events) * spec.rumor_fraction));
  std::vector<Label> labels(spec.events, Label::non_rumor);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(rumors), Label::rumor);
  std::shuffle(labels.begin(), labels.end(), rng.gen);

  std::vector<AdhocEventTree> out;
  out.reserve(spec.events);
  std::size_t author_id = 0;
  for (std::size_t e = 0; e < spec.events; ++e) {
    const bool rumor = labels[e] == Label::rumor;
    // author_signal decides whether this tree follows its class pattern
    const bool typical = rng.chance(spec.author_signal);
    const bool prominent_root = rumor != typical;
    std::int64_t ts = 1'500'000'000 + static_cast<std::int64_t>(e) * 10'000;

    AdhocEventTree tree;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05zu", e);
    tree.event_id = id;
    tree.label = labels[e];

    std::string claim = filler_text(rng, spec.words_per_post);
    if (rumor && rng.chance(spec.marker_probability)) {
      const auto at = static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(spec.words_per_post)));
      std::vector<std::string> words;
      for (auto& w : tokenize_words(claim)) words.push_back(w);
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), spec.marker);
      claim.clear();
      for (const auto& w : words) claim += (claim.empty() ? "" : " ") + w;
    }
    tree.nodes.push_back({tree.event_id + "-0", std::nullopt, claim, ts,
                          make_profile(rng, prominent_root, ts, author_id++)});
    tree.parent.push_back(kNoParent);
    tree.children.emplace_back();
    std::vector<std::size_t> depth{0};

    const auto replies = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(spec.min_replies),
                                                              static_cast<std::int64_t>(spec.max_replies)));
    for (std::size_t r = 1; r <= replies; ++r) {
      std::vector<std::size_t> open;
      for (std::size_t i = 0; i < tree.nodes.size(); ++i)
        if (tree.children[i].size() < spec.max_children && depth[i] < spec.max_depth) open.push_back(i);
      if (open.empty()) break;
      const std::size_t parent = open[static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(open.size()) - 1))];
      ts += rng.between(1, 600);
      std::string text = filler_text(rng, 1 + static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(spec.words_per_post) - 1)));
      if (rng.chance(rumor ? spec.question_rate_rumor : spec.question_rate_non_rumor)) text += " ?";
      // Repliers to a prominent account are ordinary, and vice versa now and then.
      const bool prominent = rng.chance(prominent_root ? 0.05 : 0.3);
      tree.nodes.push_back({tree.event_id + "-" + std::to_string(r), tree.nodes[parent].node_id, text, ts,
                            make_profile(rng, prominent, ts, author_id++)});
      tree.parent.push_back(parent);
      tree.children[parent].push_back(tree.nodes.size() - 1);
      tree.children.emplace_back();
      depth.push_back(depth[parent] + 1);
    }
    out.push_back(std::move(tree));
  }
  return out;
}

ad::GradCheckReport gradient_check(const GradCheckSetup& setup) {
  if (setup.nodes < 1) throw InvalidSpec("gradient check needs at least one node");
  SyntheticSpec spec;
  spec.events = 1;
  spec.min_replies = spec.max_replies = setup.nodes - 1;
  spec.max_children = setup.nodes;
  spec.max_depth = setup.nodes;
  spec.words_per_post = setup.max_len;
  spec.seed = setup.seed;
  const AdhocEventTree tree = generate_synthetic(spec).front();

  std::vector<std::string> corpus;
  for (const auto& n : tree.nodes) corpus.push_back(n.text);
  const Vocab vocab = Vocab::build(corpus);
  const EncodedEvent event = encode_event(tree, vocab, setup.max_len);

  Hyperparams hp;
  hp.d = setup.d;
  hp.max_len = setup.max_len;
  hp.seed = setup.seed;
  ad::ParameterSet params = model::init_params(vocab.size(), setup.d, setup.ablation, setup.seed);
  auto build = [&](ad::ParameterBinding& b) {
    std::mt19937_64 rng(setup.seed);
    const auto fwd = model::forward_tree(b, event, hp, setup.ablation, ad::Mode::eval, rng);
    ad::Graph& g = b.graph();
    return g.add(model::cross_entropy(g, fwd.probs, event.label), model::l2_penalty(b, hp.l2));
  };
  return ad::grad_check(build, params, setup.eps);
}

}  // namespace baet::eval
