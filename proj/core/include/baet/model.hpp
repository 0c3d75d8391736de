#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "baet/autodiff/graph.hpp"
#include "baet/autodiff/parameters.hpp"
#include "baet/config.hpp"
#include "baet/features.hpp"

namespace baet::model {

class IndexOutOfVocab : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class TopologyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class TreeSide { post, author };

const char* side_name(TreeSide side);

/// Creates every trainable tensor the configuration uses, normally distributed
/// (Xavier scale; biases start at zero). Names are "<side>.<module>.<tensor>".
ad::ParameterSet init_params(std::size_t vocab_size, std::size_t d, const AblationConfig& ablation,
                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Node-level representation

/// Frequency-enhanced embedding of the first `rows` positions of a post: row j is the
/// embedding of ids[j] scaled by freq[j]. With frequency_scaled == false the scale is
/// 1 for real tokens and 0 for padding.
ad::Var embed_post(ad::Graph& g, ad::Var table, const TokenizedPost& post, std::size_t rows,
                   bool frequency_scaled = true);

/// 16 x d author matrix: rows 0-9 are basic_j * w_basic, rows 10-15 habit_j * w_habit.
ad::Var encode_author(ad::Graph& g, const AuthorFeatures& f, ad::Var w_basic, ad::Var w_habit);
/// Ablated author encoder: all 16 raw features times a single 1 x d transform.
ad::Var encode_author_raw(ad::Graph& g, const AuthorFeatures& f, ad::Var w_raw);

struct RalWeights {
  ad::Var wq, wk, wv, wa, ba;
};

/// Self-attention within one node matrix, padding keys excluded.
ad::Var self_attend(ad::Graph& g, ad::Var v, const RalWeights& w, ad::MaskView key_mask = {});

/// Fuses the self-attended node with the root. Root: attended + mu * raw.
/// Otherwise: attended + mu * sigmoid([root_attended, attended] W^a + b^a) * attended.
ad::Var ral_fuse(ad::Graph& g, ad::Var raw, ad::Var root_attended, ad::Var attended, bool is_root,
                 double mu, const RalWeights& w);

/// Convenience: self_attend on both matrices then ral_fuse.
ad::Var ral_node(ad::Graph& g, ad::Var v_root, ad::Var v_node, bool is_root, double mu,
                 const RalWeights& w, ad::MaskView root_mask = {},
                 ad::MaskView node_mask = {});

/// Mean over non-padding rows (all rows when mask is empty). Throws ad::AllPadding.
ad::Var node_pool(ad::Graph& g, ad::Var u, ad::MaskView mask = {});

// ---------------------------------------------------------------------------
// Structural-level representation

struct GruWeights {
  ad::Var wu, bu, wr, wz, wh;
};

/// Top-down tree GRU. parent[0] must be kNoParent and parent[i] < i otherwise.
/// The root's parent state is the zero vector.
std::vector<ad::Var> trvnn_forward(ad::Graph& g, std::span<const std::size_t> parent,
                                   std::span<const ad::Var> inputs, const GruWeights& w);

struct TalWeights {
  ad::Var we, be, wc;
};

struct TalOutput {
  ad::Var tree_vector;  ///< 1 x d
  ad::Var alpha;        ///< 1 x nodes, in node order
  ad::Var leaf_max;     ///< 1 x d
  ad::Var root_enhanced;
};

TalOutput tal_aggregate(ad::Graph& g, std::span<const ad::Var> hidden,
                        const std::vector<std::vector<std::size_t>>& children, const TalWeights& w);

// ---------------------------------------------------------------------------
// Prediction

/// softmax([h_post, h_author] W^y + b^y). Either vector may be invalid (ablated), in
/// which case zeros of width d stand in. `dropout_rate` applies to the concatenation in
/// train mode.
ad::Var predict(ad::Graph& g, ad::Var h_post, ad::Var h_author, std::size_t d, ad::Var wy, ad::Var by,
                double dropout_rate = 0.0, ad::Mode mode = ad::Mode::eval,
                std::mt19937_64* rng = nullptr);

/// Cross-entropy of one prediction (label 1 = non-rumor = column 1).
ad::Var cross_entropy(ad::Graph& g, ad::Var probs, Label label);

/// lambda * sum of squared weights over all non-bias parameters bound to `binding`.
ad::Var l2_penalty(ad::ParameterBinding& binding, double lambda);

// ---------------------------------------------------------------------------
// End to end

struct TreeOutput {
  ad::Var vector;                         ///< h_post / h_author
  ad::Var alpha;                          ///< invalid when TAL is ablated
  std::vector<ad::Var> node_vectors;      ///< pooled u_i
  std::vector<ad::Var> hidden;            ///< h_i
  std::vector<ad::Var> attention;         ///< self-attention outputs (probabilities via g.saved)
};

struct ForwardResult {
  ad::Var probs;  ///< 1 x 2: [rumor, non-rumor]
  TreeOutput post;
  TreeOutput author;
};

ForwardResult forward_tree(ad::ParameterBinding& binding, const EncodedEvent& event,
                           const Hyperparams& hp, const AblationConfig& ablation, ad::Mode mode,
                           std::mt19937_64& rng);

/// A trained classifier with everything needed to score raw events.
struct TrainedModel {
  Vocab vocab;
  Hyperparams hyper;
  AblationConfig ablation;
  ad::ParameterSet params;
  FeatureCaps caps;
};

struct Prediction {
  std::array<double, 2> probs{};
  Label predicted = Label::rumor;
  std::vector<double> post_alpha;
  std::vector<double> author_alpha;
};

Prediction predict_event(const TrainedModel& model, const EncodedEvent& event);
Prediction predict_event(const TrainedModel& model, const AdhocEventTree& tree);

}  // namespace baet::model
