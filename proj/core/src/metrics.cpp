#include "baet/metrics.hpp"

#include <string>

namespace baet {

namespace {

void finish(Metrics& m) {
  const double total = static_cast<double>(m.total());
  m.accuracy = total > 0 ? static_cast<double>(m.tp + m.tn) / total : 0.0;
  m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  const double pr = m.precision + m.recall;
  m.f1 = pr > 0 ? 2.0 * m.precision * m.recall / pr : 0.0;
}

}  // namespace

Metrics compute_metrics(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("compute_metrics: " + std::to_string(predicted.size()) +
                                " predictions for " + std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw EmptyInput("compute_metrics: no samples");
  Metrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool pred_pos = predicted[i] == Label::rumor;
    const bool true_pos = truth[i] == Label::rumor;
    if (pred_pos && true_pos) ++m.tp;
    else if (pred_pos) ++m.fp;
    else if (true_pos) ++m.fn;
    else ++m.tn;
  }
  finish(m);
  return m;
}

Metrics mean_metrics(std::span<const Metrics> runs) {
  if (runs.empty()) throw EmptyInput("mean_metrics: no runs");
  Metrics m;
  for (const auto& r : runs) {
    m.tp += r.tp;
    m.fp += r.fp;
    m.fn += r.fn;
    m.tn += r.tn;
    m.accuracy += r.accuracy;
    m.precision += r.precision;
    m.recall += r.recall;
    m.f1 += r.f1;
  }
  const double n = static_cast<double>(runs.size());
  m.accuracy /= n;
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

}  // namespace baet
