#include "baet/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "baet/autodiff/checkpoint.hpp"

namespace baet::train {

using ad::Tensor;

AdamState::AdamState(const ad::ParameterSet& params) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params.value(i);
    m.emplace_back(p.rows(), p.cols());
    v.emplace_back(p.rows(), p.cols());
  }
}

void adam_step(ad::ParameterSet& params, const ad::GradientSet& grads, AdamState& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ad::ShapeMismatch("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params.value(i);
    const Tensor& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols() || state.m[i].size() != p.size()) {
      throw ad::ShapeMismatch("adam_step: shape mismatch for " + params.name(i));
    }
    for (double x : g.values()) {
      if (!std::isfinite(x)) throw NonFiniteGradient("non-finite gradient for " + params.name(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.value(i);
    const Tensor& g = grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.eps);
    }
  }
}

std::vector<Fold> kfold_split(std::span<const Label> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw TooFewSamples("k-fold split needs k >= 2");
  if (labels.size() < k) {
    throw TooFewSamples("cannot split " + std::to_string(labels.size()) + " events into " +
                        std::to_string(k) + " folds");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order;
  order.reserve(labels.size());
  for (Label cls : {Label::rumor, Label::non_rumor}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    order.insert(order.end(), members.begin(), members.end());
  }
  std::vector<Fold> folds(k);
  for (std::size_t pos = 0; pos < order.size(); ++pos) folds[pos % k].test.push_back(order[pos]);
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(folds[f].test.begin(), folds[f].test.end());
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) folds[f].train.insert(folds[f].train.end(), folds[g].test.begin(), folds[g].test.end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

std::vector<Fold> kfold_split(std::span<const AdhocEventTree> events, std::size_t k, std::uint64_t seed) {
  std::vector<Label> labels;
  labels.reserve(events.size());
  for (const auto& e : events) labels.push_back(e.label);
  return kfold_split(labels, k, seed);
}

std::uint64_t fold_hash(std::span<const Fold> folds) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t x) {
    for (int b = 0; b < 8; ++b) {
      h ^= (x >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (const auto& f : folds) {
    mix(f.test.size());
    for (std::size_t i : f.test) mix(i);
  }
  return h;
}

void TrainConfig::validate() const {
  hyper.validate();
  ablation.validate();
}

nlohmann::json to_json(const TrainConfig& config) {
  return {{"hyper", baet::to_json(config.hyper)},
          {"ablation", baet::to_json(config.ablation)},
          {"caps",
           {{"post_length", config.caps.post_length},
            {"word_length", config.caps.word_length},
            {"punctuation", config.caps.punctuation}}}};
}

std::string config_digest(const TrainConfig& config) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : to_json(config).dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::vector<AdhocEventTree> select(std::span<const AdhocEventTree> events,
                                   std::span<const std::size_t> idx) {
  std::vector<AdhocEventTree> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(events[i]);
  return out;
}

// Per-event dropout stream, independent of visiting order.
std::mt19937_64 event_rng(std::uint64_t seed, std::size_t epoch, std::size_t event) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(event)};
  return std::mt19937_64(seq);
}

struct Score {
  double loss = 0.0;
  double accuracy = 0.0;
};

Score score(const model::TrainedModel& m, std::span<const EncodedEvent> events) {
  Score s;
  for (const auto& e : events) {
    const auto p = model::predict_event(m, e);
    s.loss -= std::log(std::max(p.probs[to_int(e.label)], 1e-12));
    s.accuracy += p.predicted == e.label ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(events.size());
  return {s.loss / n, s.accuracy / n};
}

std::vector<EncodedEvent> encode_all(std::span<const AdhocEventTree> events, const model::TrainedModel& m) {
  std::vector<EncodedEvent> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(encode_event(e, m.vocab, m.hyper.max_len, m.caps));
  return out;
}

}  // namespace

TrainResult train_model(std::span<const AdhocEventTree> events, const TrainConfig& config,
                        std::span<const AdhocEventTree> validation) {
  config.validate();
  if (events.empty()) throw TooFewSamples("train_model: empty training set");
  const Hyperparams& hp = config.hyper;

  std::vector<AdhocEventTree> held_train;
  std::vector<AdhocEventTree> held_val;
  if (hp.patience > 0 && validation.empty()) {
    const std::size_t k = std::min<std::size_t>(10, events.size());
    if (k < 2) throw TooFewSamples("early stopping needs at least two training events");
    const auto folds = kfold_split(events, k, hp.seed ^ 0x9e3779b97f4a7c15ull);
    held_train = select(events, folds[0].train);
    held_val = select(events, folds[0].test);
    events = held_train;
    validation = held_val;
  }

  TrainResult result;
  model::TrainedModel& m = result.model;
  m.hyper = hp;
  m.ablation = config.ablation;
  m.caps = config.caps;
  {
    std::vector<std::string> corpus;
    for (const auto& e : events)
      for (const auto& n : e.nodes) corpus.push_back(n.text);
    m.vocab = Vocab::build(corpus, hp.min_count);
  }
  m.params = model::init_params(m.vocab.size(), hp.d, config.ablation, hp.seed);

  const std::vector<EncodedEvent> train_set = encode_all(events, m);
  const std::vector<EncodedEvent> val_set = encode_all(validation, m);
  const bool use_val = hp.patience > 0 && !val_set.empty();

  const Score init = score(m, train_set);
  result.trace.push_back({0, "train", init.loss, init.accuracy});
  double best_val = -1.0;
  ad::ParameterSet best_params;
  std::size_t stale = 0;
  if (use_val) {
    const Score v = score(m, val_set);
    result.trace.push_back({0, "validation", v.loss, v.accuracy});
    best_val = v.accuracy;
    best_params = m.params;
  }

  AdamState adam(m.params);
  ad::GradientSet grads(m.params);
  std::mt19937_64 shuffle_rng(hp.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += hp.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      grads.zero();
      for (std::size_t pos = start; pos < end; ++pos) {
        const EncodedEvent& e = train_set[order[pos]];
        ad::Graph g;
        ad::ParameterBinding binding(g, m.params);
        auto rng = event_rng(hp.seed, epoch, order[pos]);
        const auto fwd = model::forward_tree(binding, e, hp, config.ablation, ad::Mode::train, rng);
        const ad::Var ce = model::cross_entropy(g, fwd.probs, e.label);
        const double ce_value = g.value(ce)[0];
        if (!std::isfinite(ce_value)) throw NonFiniteLoss(epoch, batch);
        epoch_loss += ce_value;
        const Tensor& p = g.value(fwd.probs);
        const Label guess = p[1] > p[0] ? Label::non_rumor : Label::rumor;
        if (guess == e.label) ++correct;
        g.backward(g.scale(ce, inv));
        binding.collect(grads);
      }
      // The penalty gradient is added analytically: d/dW lambda * ||W||^2.
      if (hp.l2 > 0.0) {
        for (std::size_t i = 0; i < m.params.size(); ++i) {
          if (m.params.kind(i) == ad::ParamKind::bias) continue;
          grads[i].add_scaled(m.params.value(i), 2.0 * hp.l2);
        }
      }
      try {
        adam_step(m.params, grads, adam, hp.learning_rate);
      } catch (const NonFiniteGradient&) {
        throw NonFiniteLoss(epoch, batch);
      }
    }
    const double n = static_cast<double>(train_set.size());
    result.trace.push_back({epoch, "train", epoch_loss / n, static_cast<double>(correct) / n});

    if (use_val) {
      const Score v = score(m, val_set);
      result.trace.push_back({epoch, "validation", v.loss, v.accuracy});
      if (v.accuracy > best_val) {
        best_val = v.accuracy;
        best_params = m.params;
        result.best_epoch = epoch;
        stale = 0;
      } else if (++stale >= hp.patience) {
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
  }
  if (use_val) m.params = std::move(best_params);
  return result;
}

std::vector<model::Prediction> predict_all(const model::TrainedModel& model,
                                           std::span<const AdhocEventTree> events) {
  std::vector<model::Prediction> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(model::predict_event(model, e));
  return out;
}

Metrics evaluate(const model::TrainedModel& model, std::span<const AdhocEventTree> events) {
  std::vector<Label> predicted;
  std::vector<Label> truth;
  for (const auto& e : events) {
    predicted.push_back(model::predict_event(model, e).predicted);
    truth.push_back(e.label);
  }
  return compute_metrics(predicted, truth);
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("hyper")) c.hyper = hyperparams_from_json(j.at("hyper"));
  if (j.contains("ablation")) c.ablation = ablation_from_json(j.at("ablation"));
  if (j.contains("caps")) {
    const auto& caps = j.at("caps");
    c.caps.post_length = caps.value("post_length", c.caps.post_length);
    c.caps.word_length = caps.value("word_length", c.caps.word_length);
    c.caps.punctuation = caps.value("punctuation", c.caps.punctuation);
  }
  return c;
}

void save_model(const model::TrainedModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ad::save_checkpoint(model.params, dir / "params.ckpt");
  model.vocab.save(dir / "vocab.txt");
  std::ofstream cfg(dir / "config.json");
  if (!cfg) throw std::runtime_error("cannot write " + (dir / "config.json").string());
  cfg << to_json(TrainConfig{model.hyper, model.ablation, model.caps}).dump(2) << '\n';
}

model::TrainedModel load_model(const std::filesystem::path& dir) {
  std::ifstream cfg(dir / "config.json");
  if (!cfg) throw std::runtime_error("cannot read " + (dir / "config.json").string());
  const TrainConfig c = config_from_json(nlohmann::json::parse(cfg));
  model::TrainedModel m;
  m.hyper = c.hyper;
  m.ablation = c.ablation;
  m.caps = c.caps;
  m.vocab = Vocab::load(dir / "vocab.txt");
  m.params = ad::load_checkpoint(dir / "params.ckpt");
  return m;
}

void write_trace(std::span<const LossRecord> trace, std::ostream& out) {
  for (const auto& r : trace) {
    out << nlohmann::json{{"epoch", r.epoch}, {"split", r.split}, {"loss", r.loss}, {"accuracy", r.accuracy}}.dump()
        << '\n';
  }
}

std::size_t default_jobs() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs == 0) jobs = default_jobs();
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

struct FoldOutcome {
  Metrics metrics;
  std::vector<LossRecord> trace;
};

FoldOutcome run_fold(std::span<const AdhocEventTree> events, const TrainConfig& config, const Fold& fold) {
  const auto train_set = select(events, fold.train);
  const auto test_set = select(events, fold.test);
  TrainResult r = train_model(train_set, config);
  return {evaluate(r.model, test_set), std::move(r.trace)};
}

CvResult assemble(std::vector<Fold> folds, std::vector<FoldOutcome> outcomes) {
  CvResult cv;
  cv.fold_hash = fold_hash(folds);
  cv.folds = std::move(folds);
  for (auto& o : outcomes) {
    cv.fold_metrics.push_back(o.metrics);
    cv.traces.push_back(std::move(o.trace));
  }
  cv.mean = mean_metrics(cv.fold_metrics);
  return cv;
}

}  // namespace

CvResult cross_validate(std::span<const AdhocEventTree> events, const TrainConfig& config, std::size_t jobs) {
  const auto folds = kfold_split(events, config.hyper.folds, config.hyper.seed);
  return cross_validate(events, config, folds, jobs);
}

CvResult cross_validate(std::span<const AdhocEventTree> events, const TrainConfig& config,
                        std::span<const Fold> folds, std::size_t jobs) {
  config.validate();
  std::vector<FoldOutcome> outcomes(folds.size());
  parallel_for(folds.size(), jobs, [&](std::size_t f) { outcomes[f] = run_fold(events, config, folds[f]); });
  return assemble({folds.begin(), folds.end()}, std::move(outcomes));
}

GridSpec GridSpec::single(const Hyperparams& base) {
  return {{base.d}, {base.mu}, {base.learning_rate}, {base.l2}};
}

GridResult grid_search(std::span<const AdhocEventTree> events, const GridSpec& grid,
                       const TrainConfig& base, std::size_t jobs) {
  if (grid.size() == 0) throw ConfigError("grid_search: empty grid");
  std::vector<TrainConfig> points;
  for (std::size_t d : grid.d)
    for (double mu : grid.mu)
      for (double lr : grid.learning_rate)
        for (double l2 : grid.l2) {
          TrainConfig c = base;
          c.hyper.d = d;
          c.hyper.mu = mu;
          c.hyper.learning_rate = lr;
          c.hyper.l2 = l2;
          c.validate();
          points.push_back(c);
        }

  const auto folds = kfold_split(events, base.hyper.folds, base.hyper.seed);
  const std::size_t k = folds.size();
  std::vector<FoldOutcome> outcomes(points.size() * k);
  parallel_for(outcomes.size(), jobs, [&](std::size_t job) {
    outcomes[job] = run_fold(events, points[job / k], folds[job % k]);
  });

  GridResult result;
  for (std::size_t p = 0; p < points.size(); ++p) {
    std::vector<FoldOutcome> mine(std::make_move_iterator(outcomes.begin() + static_cast<std::ptrdiff_t>(p * k)),
                                  std::make_move_iterator(outcomes.begin() + static_cast<std::ptrdiff_t>((p + 1) * k)));
    const CvResult cv = assemble(folds, std::move(mine));
    result.rows.push_back({points[p].hyper, cv.mean, cv.fold_hash});
  }
  const GridRow* best = &result.rows.front();
  for (const auto& row : result.rows) {
    const bool better =
        row.mean.accuracy > best->mean.accuracy ||
        (row.mean.accuracy == best->mean.accuracy &&
         (row.mean.f1 > best->mean.f1 || (row.mean.f1 == best->mean.f1 && row.hyper.d < best->hyper.d)));
    if (better) best = &row;
  }
  result.best = best->hyper;
  return result;
}

void write_grid_table(const GridResult& result, std::ostream& out) {
  out << "d\tmu\tlearning_rate\tl2\taccuracy\tprecision\trecall\tf1\tfold_hash\n";
  for (const auto& r : result.rows) {
    out << r.hyper.d << '\t' << r.hyper.mu << '\t' << r.hyper.learning_rate << '\t' << r.hyper.l2 << '\t'
        << r.mean.accuracy << '\t' << r.mean.precision << '\t' << r.mean.recall << '\t' << r.mean.f1 << '\t'
        << std::hex << r.fold_hash << std::dec << '\n';
  }
}

}  // namespace baet::train
