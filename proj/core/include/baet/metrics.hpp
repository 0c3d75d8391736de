#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string_view>

#include "baet/ingest.hpp"

namespace baet {

class EmptyInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Binary classification metrics with the rumor class (label 0) as positive.
struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  std::size_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

inline constexpr std::string_view kPositiveClassNote = "positive class: rumor (label 0)";

/// Throws EmptyInput on empty input and std::invalid_argument on a length mismatch.
Metrics compute_metrics(std::span<const Label> predicted, std::span<const Label> truth);

/// Unweighted mean of each score across runs; confusion counts are summed.
Metrics mean_metrics(std::span<const Metrics> runs);

}  // namespace baet
