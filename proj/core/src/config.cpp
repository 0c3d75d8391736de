#include "baet/config.hpp"

#include <nlohmann/json.hpp>

namespace baet {

using nlohmann::json;

void Hyperparams::validate() const {
  if (d < 1) throw ConfigError("d must be >= 1");
  if (!(mu >= 0.0 && mu <= 1.0)) throw ConfigError("mu must lie in [0, 1]");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
}

void AblationConfig::validate() const {
  if (!use_post_tree && !use_author_tree) {
    throw ConfigError("ablation disables both the post tree and the author tree");
  }
}

namespace {

json side_json(const TreeAblation& t) {
  return {{"tnp", t.tnp}, {"ral", t.ral}, {"trvnn", t.trvnn}, {"tal", t.tal}};
}

TreeAblation side_from(const json& j) {
  TreeAblation t;
  t.tnp = j.value("tnp", true);
  t.ral = j.value("ral", true);
  t.trvnn = j.value("trvnn", true);
  t.tal = j.value("tal", true);
  return t;
}

}  // namespace

json to_json(const Hyperparams& h) {
  return {{"d", h.d},
          {"mu", h.mu},
          {"max_len", h.max_len},
          {"learning_rate", h.learning_rate},
          {"l2", h.l2},
          {"dropout", h.dropout},
          {"batch_size", h.batch_size},
          {"epochs", h.epochs},
          {"folds", h.folds},
          {"seed", h.seed},
          {"min_count", h.min_count},
          {"patience", h.patience}};
}

json to_json(const AblationConfig& a) {
  return {{"use_post_tree", a.use_post_tree},
          {"use_author_tree", a.use_author_tree},
          {"post", side_json(a.post)},
          {"author", side_json(a.author)}};
}

Hyperparams hyperparams_from_json(const json& j) {
  Hyperparams h;
  h.d = j.value("d", h.d);
  h.mu = j.value("mu", h.mu);
  h.max_len = j.value("max_len", h.max_len);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.l2 = j.value("l2", h.l2);
  h.dropout = j.value("dropout", h.dropout);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.epochs = j.value("epochs", h.epochs);
  h.folds = j.value("folds", h.folds);
  h.seed = j.value("seed", h.seed);
  h.min_count = j.value("min_count", h.min_count);
  h.patience = j.value("patience", h.patience);
  return h;
}

AblationConfig ablation_from_json(const json& j) {
  AblationConfig a;
  a.use_post_tree = j.value("use_post_tree", true);
  a.use_author_tree = j.value("use_author_tree", true);
  if (j.contains("post")) a.post = side_from(j.at("post"));
  if (j.contains("author")) a.author = side_from(j.at("author"));
  return a;
}

}  // namespace baet
