#include <benchmark/benchmark.h>

#include "baet/eval.hpp"
#include "baet/model.hpp"
#include "baet/train.hpp"

namespace {

using namespace baet;

struct Setup {
  std::vector<AdhocEventTree> events;
  train::TrainConfig config;

  explicit Setup(std::size_t d, std::size_t n = 16) {
    eval::SyntheticSpec s;
    s.events = n;
    events = eval::generate_synthetic(s);
    config.hyper.d = d;
    config.hyper.epochs = 1;
  }
};

model::TrainedModel untrained(const Setup& s) {
  std::vector<std::string> corpus;
  for (const auto& e : s.events)
    for (const auto& n : e.nodes) corpus.push_back(n.text);
  model::TrainedModel m;
  m.vocab = Vocab::build(corpus);
  m.hyper = s.config.hyper;
  m.params = model::init_params(m.vocab.size(), m.hyper.d, {}, 1);
  return m;
}

void BM_ForwardTree(benchmark::State& state) {
  const Setup s(static_cast<std::size_t>(state.range(0)));
  const auto m = untrained(s);
  const EncodedEvent e = encode_event(s.events[0], m.vocab, m.hyper.max_len);
  for (auto _ : state) benchmark::DoNotOptimize(model::predict_event(m, e).probs);
  state.counters["nodes"] = static_cast<double>(e.node_count());
}
BENCHMARK(BM_ForwardTree)->Arg(16)->Arg(128);

void BM_ForwardBackward(benchmark::State& state) {
  const Setup s(static_cast<std::size_t>(state.range(0)));
  const auto m = untrained(s);
  const EncodedEvent e = encode_event(s.events[0], m.vocab, m.hyper.max_len);
  for (auto _ : state) {
    ad::Graph g;
    ad::ParameterBinding b(g, m.params);
    std::mt19937_64 rng(0);
    const auto r = model::forward_tree(b, e, m.hyper, m.ablation, ad::Mode::train, rng);
    g.backward(model::cross_entropy(g, r.probs, e.label));
    ad::GradientSet grads(m.params);
    b.collect(grads);
    benchmark::DoNotOptimize(grads[0].data());
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(128);

void BM_TrainEpoch(benchmark::State& state) {
  const Setup s(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(train::train_model(s.events, s.config).trace.size());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.events.size()));
}
BENCHMARK(BM_TrainEpoch)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace
