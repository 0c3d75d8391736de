#include "baet/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

namespace baet {

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return tokens;
}

Vocab::Vocab() {
  append("<pad>");
  append("<unk>");
}

void Vocab::append(std::string token) {
  lookup_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
}

Vocab Vocab::build(std::span<const std::string> corpus, std::size_t min_count) {
  if (corpus.empty()) throw EmptyCorpus("cannot build a vocabulary from an empty corpus");
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus)
    for (auto& tok : tokenize_words(text)) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts)
    if (n >= min_count) ranked.emplace_back(tok, n);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [tok, n] : ranked) v.append(tok);
  return v;
}

std::size_t Vocab::index(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  if (it == lookup_.end() || it->second < 2) return kUnknownIndex;
  return it->second;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (std::size_t i = 2; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    v.append(line);
  }
  return v;
}

TokenizedPost tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("max post length must be >= 1");
  const auto words = tokenize_words(text);
  std::vector<std::size_t> all;
  all.reserve(words.size());
  std::map<std::size_t, double> counts;
  for (const auto& w : words) {
    all.push_back(vocab.index(w));
    counts[all.back()] += 1.0;
  }
  TokenizedPost post;
  post.length = std::min(all.size(), max_len);
  post.ids.assign(max_len, kPadIndex);
  post.freq.assign(max_len, 0.0);
  for (std::size_t j = 0; j < post.length; ++j) {
    post.ids[j] = all[j];
    post.freq[j] = counts[all[j]];
  }
  return post;
}

double timestamp_interval(std::int64_t s_i, std::int64_t s_0) {
  if (s_i < s_0) {
    throw NegativeInterval("timestamp " + std::to_string(s_i) + " precedes reference " +
                           std::to_string(s_0));
  }
  return std::log(static_cast<double>(s_i - s_0) + 1.0);
}

double jaccard_similarity(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t shared = 0;
  for (const auto& t : a) shared += b.count(t);
  const std::size_t uni = a.size() + b.size() - shared;
  return static_cast<double>(shared) / static_cast<double>(uni);
}

namespace {

std::set<std::string> token_set(std::string_view text) {
  auto words = tokenize_words(text);
  return {words.begin(), words.end()};
}

bool is_punct_token(const std::string& t) {
  return t.size() == 1 && static_cast<unsigned char>(t[0]) < 0x80 &&
         std::ispunct(static_cast<unsigned char>(t[0]));
}

}  // namespace

HabitFeatures writing_habit_features(std::string_view post, std::string_view claim,
                                     std::size_t max_tree_length, const FeatureCaps& caps) {
  const auto words = tokenize_words(post);
  double chars = 0.0;
  std::size_t word_count = 0;
  for (const auto& w : words) {
    if (is_punct_token(w)) continue;
    chars += static_cast<double>(w.size());
    ++word_count;
  }
  const double mean_word = word_count ? chars / static_cast<double>(word_count) : 0.0;
  const auto questions = static_cast<double>(std::count(post.begin(), post.end(), '?'));
  const auto exclaims = static_cast<double>(std::count(post.begin(), post.end(), '!'));
  return {jaccard_similarity(token_set(post), token_set(claim)),
          std::min(static_cast<double>(words.size()), caps.post_length),
          std::min(static_cast<double>(max_tree_length), caps.post_length),
          std::min(mean_word, caps.word_length),
          std::min(questions, caps.punctuation),
          std::min(exclaims, caps.punctuation)};
}

HabitFeatures writing_habit_features(std::string_view post, std::string_view claim,
                                     const AdhocEventTree& tree, const FeatureCaps& caps) {
  std::size_t longest = 0;
  for (const auto& n : tree.nodes) longest = std::max(longest, tokenize_words(n.text).size());
  return writing_habit_features(post, claim, longest, caps);
}

BasicFeatures basic_features(const RawAuthorProfile& p, std::int64_t post_ts, std::int64_t root_ts) {
  const std::int64_t account_gap =
      p.account_created <= root_ts ? root_ts - p.account_created : p.account_created - root_ts;
  return {static_cast<double>(p.followers),
          static_cast<double>(p.friends),
          static_cast<double>(p.favorites),
          static_cast<double>(p.reposts),
          static_cast<double>(p.statuses),
          p.verified ? 1.0 : 0.0,
          p.geo_enabled ? 1.0 : 0.0,
          p.time_zone_enabled ? 1.0 : 0.0,
          timestamp_interval(post_ts, root_ts),
          std::log(static_cast<double>(account_gap) + 1.0)};
}

ad::Tensor minmax_normalize(const ad::Tensor& raw) {
  if (raw.rows() == 0) throw std::invalid_argument("minmax_normalize: empty matrix");
  ad::Tensor out(raw.rows(), raw.cols());
  for (std::size_t c = 0; c < raw.cols(); ++c) {
    double lo = raw(0, c), hi = raw(0, c);
    for (std::size_t r = 1; r < raw.rows(); ++r) {
      lo = std::min(lo, raw(r, c));
      hi = std::max(hi, raw(r, c));
    }
    if (hi == lo) continue;
    for (std::size_t r = 0; r < raw.rows(); ++r) out(r, c) = (raw(r, c) - lo) / (hi - lo);
  }
  return out;
}

std::vector<AuthorFeatures> author_features(const AdhocEventTree& tree, const FeatureCaps& caps) {
  const std::size_t n = tree.nodes.size();
  if (n == 0) return {};
  const std::int64_t root_ts = tree.nodes[0].timestamp;
  std::size_t longest = 0;
  for (const auto& node : tree.nodes) longest = std::max(longest, tokenize_words(node.text).size());

  ad::Tensor basic(n, kBasicFeatureCount);
  ad::Tensor habit(n, kHabitFeatureCount);
  for (std::size_t i = 0; i < n; ++i) {
    const EventNode& node = tree.nodes[i];
    if (node.author) {
      const auto b = basic_features(*node.author, node.timestamp, root_ts);
      std::copy(b.begin(), b.end(), basic.row_span(i).begin());
    }
    const auto h = writing_habit_features(node.text, tree.nodes[0].text, longest, caps);
    std::copy(h.begin(), h.end(), habit.row_span(i).begin());
  }
  const ad::Tensor nb = minmax_normalize(basic);
  const ad::Tensor nh = minmax_normalize(habit);
  std::vector<AuthorFeatures> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(nb.row_span(i).begin(), kBasicFeatureCount, out[i].basic.begin());
    std::copy_n(nh.row_span(i).begin(), kHabitFeatureCount, out[i].habit.begin());
  }
  return out;
}

EncodedEvent encode_event(const AdhocEventTree& tree, const Vocab& vocab, std::size_t max_len,
                          const FeatureCaps& caps) {
  EncodedEvent e;
  e.event_id = tree.event_id;
  e.label = tree.label;
  e.topology = {tree.parent, tree.children};
  for (const auto& n : tree.nodes) {
    e.node_ids.push_back(n.node_id);
    e.posts.push_back(tokenize(n.text, vocab, max_len));
  }
  e.authors = author_features(tree, caps);
  return e;
}

}  // namespace baet
