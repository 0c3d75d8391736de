#include "baet/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace baet::model {

using ad::Graph;
using ad::Tensor;
using ad::Var;

const char* side_name(TreeSide side) { return side == TreeSide::post ? "post" : "author"; }

namespace {

Tensor normal_tensor(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(rows, cols);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  return normal_tensor(rows, cols, std::sqrt(2.0 / static_cast<double>(rows + cols)), rng);
}

void add_side(ad::ParameterSet& p, const std::string& side, std::size_t d, const TreeAblation& t,
              std::mt19937_64& rng) {
  if (t.ral) {
    p.add(side + ".ral.wq", xavier(d, d, rng));
    p.add(side + ".ral.wk", xavier(d, d, rng));
    p.add(side + ".ral.wv", xavier(d, d, rng));
    p.add(side + ".ral.wa", xavier(2 * d, d, rng));
    p.add(side + ".ral.ba", Tensor(1, d), ad::ParamKind::bias);
  }
  if (t.trvnn) {
    p.add(side + ".trvnn.wu", xavier(d, d, rng));
    p.add(side + ".trvnn.bu", Tensor(1, d), ad::ParamKind::bias);
    p.add(side + ".trvnn.wr", xavier(2 * d, d, rng));
    p.add(side + ".trvnn.wz", xavier(2 * d, d, rng));
    p.add(side + ".trvnn.wh", xavier(2 * d, d, rng));
  }
  if (t.tal) {
    p.add(side + ".tal.we", xavier(2 * d, d, rng));
    p.add(side + ".tal.be", Tensor(1, d), ad::ParamKind::bias);
    p.add(side + ".tal.wc", xavier(d, 1, rng));
  }
}

ad::Mask padding_mask(const TokenizedPost& post, std::size_t rows) {
  ad::Mask mask(rows);
  for (std::size_t j = 0; j < rows; ++j) mask[j] = post.is_padding(j) ? 0 : 1;
  return mask;
}

Tensor feature_column(std::span<const double> values) {
  return Tensor(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

}  // namespace

ad::ParameterSet init_params(std::size_t vocab_size, std::size_t d, const AblationConfig& ablation,
                             std::uint64_t seed) {
  ablation.validate();
  if (d < 1) throw ConfigError("d must be >= 1");
  std::mt19937_64 rng(seed);
  ad::ParameterSet p;
  if (ablation.use_post_tree) {
    p.add("post.embedding", normal_tensor(vocab_size, d, 1.0 / std::sqrt(static_cast<double>(d)), rng),
          ad::ParamKind::embedding);
    add_side(p, "post", d, ablation.post, rng);
  }
  if (ablation.use_author_tree) {
    if (ablation.author.tnp) {
      p.add("author.tnp.w_basic", xavier(1, d, rng));
      p.add("author.tnp.w_habit", xavier(1, d, rng));
    } else {
      p.add("author.raw.w", xavier(1, d, rng));
    }
    add_side(p, "author", d, ablation.author, rng);
  }
  p.add("pred.wy", xavier(2 * d, 2, rng));
  p.add("pred.by", Tensor(1, 2), ad::ParamKind::bias);
  return p;
}

Var embed_post(Graph& g, Var table, const TokenizedPost& post, std::size_t rows, bool frequency_scaled) {
  rows = std::min(rows, post.ids.size());
  const std::size_t vocab = g.value(table).rows();
  for (std::size_t j = 0; j < rows; ++j) {
    if (post.ids[j] >= vocab) {
      throw IndexOutOfVocab("token id " + std::to_string(post.ids[j]) + " outside vocabulary of " +
                            std::to_string(vocab));
    }
  }
  const std::span<const std::size_t> ids(post.ids.data(), rows);
  Tensor scale(rows, 1);
  for (std::size_t j = 0; j < rows; ++j) {
    scale(j, 0) = frequency_scaled ? post.freq[j] : (post.is_padding(j) ? 0.0 : 1.0);
  }
  return g.row_scale(g.gather_rows(table, ids), g.constant(std::move(scale)));
}

Var encode_author(Graph& g, const AuthorFeatures& f, Var w_basic, Var w_habit) {
  const Var basic = g.matmul(g.constant(feature_column(f.basic)), w_basic);
  const Var habit = g.matmul(g.constant(feature_column(f.habit)), w_habit);
  const std::array<Var, 2> parts{basic, habit};
  return g.concat_rows(parts);
}

Var encode_author_raw(Graph& g, const AuthorFeatures& f, Var w_raw) {
  std::array<double, kAuthorFeatureCount> all{};
  std::copy(f.basic.begin(), f.basic.end(), all.begin());
  std::copy(f.habit.begin(), f.habit.end(), all.begin() + kBasicFeatureCount);
  return g.matmul(g.constant(feature_column(all)), w_raw);
}

Var self_attend(Graph& g, Var v, const RalWeights& w, ad::MaskView key_mask) {
  return g.attention(g.matmul(v, w.wq), g.matmul(v, w.wk), g.matmul(v, w.wv), key_mask);
}

Var ral_fuse(Graph& g, Var raw, Var root_attended, Var attended, bool is_root, double mu,
             const RalWeights& w) {
  if (is_root) return g.add(attended, g.scale(raw, mu));
  const Var gate = g.sigmoid(g.add(g.matmul(g.concat_cols(root_attended, attended), w.wa), w.ba));
  return g.add(attended, g.scale(g.mul(gate, attended), mu));
}

Var ral_node(Graph& g, Var v_root, Var v_node, bool is_root, double mu, const RalWeights& w,
             ad::MaskView root_mask, ad::MaskView node_mask) {
  const Var root_att = self_attend(g, v_root, w, root_mask);
  if (is_root) return ral_fuse(g, v_root, root_att, root_att, true, mu, w);
  const Var node_att = self_attend(g, v_node, w, node_mask);
  return ral_fuse(g, v_node, root_att, node_att, false, mu, w);
}

Var node_pool(Graph& g, Var u, ad::MaskView mask) { return g.mean_rows(u, mask); }

std::vector<Var> trvnn_forward(Graph& g, std::span<const std::size_t> parent,
                               std::span<const Var> inputs, const GruWeights& w) {
  if (parent.size() != inputs.size()) {
    throw TopologyError("trvnn: " + std::to_string(inputs.size()) + " inputs for " +
                        std::to_string(parent.size()) + " nodes");
  }
  std::vector<Var> hidden;
  hidden.reserve(inputs.size());
  if (inputs.empty()) return hidden;
  const std::size_t d = g.value(w.wu).cols();
  const Var zero = g.constant(Tensor(1, d));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Var h_parent = zero;
    if (i == 0) {
      if (parent[0] != kNoParent) throw TopologyError("trvnn: node 0 must be the root");
    } else {
      if (parent[i] >= i) {
        throw TopologyError("trvnn: parent " + std::to_string(parent[i]) + " of node " +
                            std::to_string(i) + " does not precede it");
      }
      h_parent = hidden[parent[i]];
    }
    const Var u = g.add(g.matmul(inputs[i], w.wu), w.bu);
    const Var joint = g.concat_cols(u, h_parent);
    const Var r = g.sigmoid(g.matmul(joint, w.wr));
    const Var z = g.sigmoid(g.matmul(joint, w.wz));
    const Var candidate = g.tanh(g.matmul(g.concat_cols(u, g.mul(h_parent, r)), w.wh));
    // (1 - z) * h_parent + z * candidate
    hidden.push_back(g.add(h_parent, g.mul(z, g.sub(candidate, h_parent))));
  }
  return hidden;
}

TalOutput tal_aggregate(Graph& g, std::span<const Var> hidden,
                        const std::vector<std::vector<std::size_t>>& children, const TalWeights& w) {
  if (hidden.empty()) throw TopologyError("tal: empty tree");
  if (children.size() != hidden.size()) throw TopologyError("tal: topology size mismatch");
  std::vector<Var> leaves;
  for (std::size_t i = 0; i < hidden.size(); ++i)
    if (children[i].empty()) leaves.push_back(hidden[i]);

  TalOutput out;
  out.leaf_max = g.max_elementwise(leaves);
  out.root_enhanced = g.tanh(g.add(g.matmul(g.concat_cols(hidden[0], out.leaf_max), w.we), w.be));
  std::vector<Var> rows(hidden.begin(), hidden.end());
  rows[0] = out.root_enhanced;
  const Var stacked = g.concat_rows(rows);
  out.alpha = g.softmax_rows(g.transpose(g.matmul(stacked, w.wc)));
  out.tree_vector = g.matmul(out.alpha, stacked);
  return out;
}

Var predict(Graph& g, Var h_post, Var h_author, std::size_t d, Var wy, Var by, double dropout_rate,
            ad::Mode mode, std::mt19937_64* rng) {
  const Var post = h_post.valid() ? h_post : g.constant(Tensor(1, d));
  const Var author = h_author.valid() ? h_author : g.constant(Tensor(1, d));
  Var joint = g.concat_cols(post, author);
  if (mode == ad::Mode::train && dropout_rate > 0.0) {
    if (!rng) throw std::invalid_argument("predict: train-mode dropout needs an rng");
    joint = g.dropout(joint, dropout_rate, mode, *rng);
  }
  return g.softmax_rows(g.add(g.matmul(joint, wy), by));
}

Var cross_entropy(Graph& g, Var probs, Label label) {
  return g.nll(probs, static_cast<std::size_t>(to_int(label)));
}

Var l2_penalty(ad::ParameterBinding& binding, double lambda) {
  Graph& g = binding.graph();
  const ad::ParameterSet& params = binding.params();
  Var total = g.constant(Tensor(1, 1));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.kind(i) == ad::ParamKind::bias) continue;
    total = g.add(total, g.sum_squares(binding[i]));
  }
  return g.scale(total, lambda);
}

namespace {

RalWeights ral_weights(ad::ParameterBinding& b, const std::string& side) {
  return {b[side + ".ral.wq"], b[side + ".ral.wk"], b[side + ".ral.wv"], b[side + ".ral.wa"],
          b[side + ".ral.ba"]};
}

GruWeights gru_weights(ad::ParameterBinding& b, const std::string& side) {
  return {b[side + ".trvnn.wu"], b[side + ".trvnn.bu"], b[side + ".trvnn.wr"],
          b[side + ".trvnn.wz"], b[side + ".trvnn.wh"]};
}

TalWeights tal_weights(ad::ParameterBinding& b, const std::string& side) {
  return {b[side + ".tal.we"], b[side + ".tal.be"], b[side + ".tal.wc"]};
}

// Node matrices -> RAL -> pooled node vectors -> TRvNN -> TAL.
TreeOutput structural(ad::ParameterBinding& b, const std::string& side, const TreeAblation& t,
                      const EncodedEvent& event, std::span<const Var> node_matrices,
                      const std::vector<ad::Mask>& masks, const Hyperparams& hp,
                      ad::Mode mode, std::mt19937_64& rng) {
  Graph& g = b.graph();
  const std::size_t n = node_matrices.size();
  const std::size_t d = hp.d;
  TreeOutput out;

  std::vector<Var> fused(node_matrices.begin(), node_matrices.end());
  if (t.ral) {
    const RalWeights w = ral_weights(b, side);
    out.attention.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const ad::MaskView mask = masks.empty() ? ad::MaskView{} : ad::MaskView(masks[i]);
      out.attention.push_back(self_attend(g, node_matrices[i], w, mask));
    }
    for (std::size_t i = 0; i < n; ++i) {
      fused[i] = ral_fuse(g, node_matrices[i], out.attention[0], out.attention[i], i == 0, hp.mu, w);
    }
  }

  out.node_vectors.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Var u;
    if (masks.empty()) {
      u = node_pool(g, fused[i]);
    } else if (std::count(masks[i].begin(), masks[i].end(), 0) ==
               static_cast<std::ptrdiff_t>(masks[i].size())) {
      u = g.constant(Tensor(1, d));  // post without any token
    } else {
      u = node_pool(g, fused[i], masks[i]);
    }
    out.node_vectors.push_back(g.dropout(u, hp.dropout, mode, rng));
  }

  if (t.trvnn) {
    out.hidden = trvnn_forward(g, event.topology.parent, out.node_vectors, gru_weights(b, side));
  } else {
    out.hidden = out.node_vectors;
  }

  if (t.tal) {
    TalOutput tal = tal_aggregate(g, out.hidden, event.topology.children, tal_weights(b, side));
    out.vector = tal.tree_vector;
    out.alpha = tal.alpha;
  } else {
    out.vector = out.hidden.back();
  }
  return out;
}

}  // namespace

ForwardResult forward_tree(ad::ParameterBinding& b, const EncodedEvent& event, const Hyperparams& hp,
                           const AblationConfig& ablation, ad::Mode mode, std::mt19937_64& rng) {
  ablation.validate();
  Graph& g = b.graph();
  const std::size_t n = event.node_count();
  if (n == 0) throw TopologyError("forward_tree: event has no nodes");
  if (event.posts.size() != n || event.authors.size() != n) {
    throw TopologyError("forward_tree: encoded inputs do not match the topology");
  }
  ForwardResult result;

  if (ablation.use_post_tree) {
    // Rows past the longest post never influence the output, so they are not materialised.
    std::size_t rows = 1;
    for (const auto& p : event.posts) rows = std::max(rows, p.length);
    const Var table = b["post.embedding"];
    std::vector<Var> matrices;
    std::vector<ad::Mask> masks;
    matrices.reserve(n);
    masks.reserve(n);
    for (const auto& post : event.posts) {
      matrices.push_back(embed_post(g, table, post, rows, ablation.post.tnp));
      masks.push_back(padding_mask(post, std::min(rows, post.ids.size())));
    }
    result.post = structural(b, "post", ablation.post, event, matrices, masks, hp, mode, rng);
  }

  if (ablation.use_author_tree) {
    std::vector<Var> matrices;
    matrices.reserve(n);
    if (ablation.author.tnp) {
      const Var wb = b["author.tnp.w_basic"];
      const Var wh = b["author.tnp.w_habit"];
      for (const auto& f : event.authors) matrices.push_back(encode_author(g, f, wb, wh));
    } else {
      const Var w = b["author.raw.w"];
      for (const auto& f : event.authors) matrices.push_back(encode_author_raw(g, f, w));
    }
    result.author = structural(b, "author", ablation.author, event, matrices, {}, hp, mode, rng);
  }

  result.probs = predict(g, result.post.vector, result.author.vector, hp.d, b["pred.wy"],
                         b["pred.by"], hp.dropout, mode, &rng);
  return result;
}

namespace {

std::vector<double> row_values(const Graph& g, Var v) {
  if (!v.valid()) return {};
  const auto vals = g.value(v).values();
  return {vals.begin(), vals.end()};
}

}  // namespace

Prediction predict_event(const TrainedModel& model, const EncodedEvent& event) {
  Graph g;
  ad::ParameterBinding binding(g, model.params);
  std::mt19937_64 rng(model.hyper.seed);
  const ForwardResult r = forward_tree(binding, event, model.hyper, model.ablation, ad::Mode::eval, rng);
  Prediction p;
  const Tensor& probs = g.value(r.probs);
  p.probs = {probs[0], probs[1]};
  p.predicted = probs[1] > probs[0] ? Label::non_rumor : Label::rumor;
  p.post_alpha = row_values(g, r.post.alpha);
  p.author_alpha = row_values(g, r.author.alpha);
  return p;
}

Prediction predict_event(const TrainedModel& model, const AdhocEventTree& tree) {
  return predict_event(model, encode_event(tree, model.vocab, model.hyper.max_len, model.caps));
}

}  // namespace baet::model
