#include "baet/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "baet/autodiff/checkpoint.hpp"
#include "baet/eval.hpp"
#include "baet/features.hpp"
#include "baet/ingest.hpp"
#include "baet/train.hpp"

#ifndef BAET_VERSION
#define BAET_VERSION "0.0.0"
#endif

namespace baet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised for problems with the input data or the invocation itself (exit code 1).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  train::TrainConfig config;
  std::vector<std::string> disable;
  bool no_post_tree = false;
  bool no_author_tree = false;
  std::size_t jobs = 0;
  std::string out_dir;
  std::string data;
  std::string model_dir;

  // per-command
  std::size_t events = 200;
  double marker_probability = 0.9;
  double rumor_fraction = 0.5;
  std::string output;
  std::size_t nodes = 5;
  double threshold = 1e-4;
  std::string sweep_param = "mu";
  std::vector<double> sweep_values;
  std::vector<double> edges;
  std::string event_id;
  bool skip_final = false;
};

std::string default_out_dir() {
  if (const char* env = std::getenv("BAET_OUTPUT_DIR"); env && *env) return env;
  return "baet-out";
}

void apply_disables(Options& o) {
  AblationConfig& a = o.config.ablation;
  if (o.no_post_tree) a.use_post_tree = false;
  if (o.no_author_tree) a.use_author_tree = false;
  for (const auto& item : o.disable) {
    const auto dot = item.find('.');
    const std::string side = item.substr(0, dot);
    const std::string module = dot == std::string::npos ? "" : item.substr(dot + 1);
    TreeAblation* t = side == "post" ? &a.post : side == "author" ? &a.author : nullptr;
    bool* flag = nullptr;
    if (t) {
      if (module == "tnp") flag = &t->tnp;
      else if (module == "ral") flag = &t->ral;
      else if (module == "trvnn") flag = &t->trvnn;
      else if (module == "tal") flag = &t->tal;
    }
    if (!flag) throw ConfigError("unknown module '" + item + "' (expected post|author . tnp|ral|trvnn|tal)");
    *flag = false;
  }
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return hex64(fnv1a(buf.str()));
}

class Run {
 public:
  Run(std::string command, const std::vector<std::string>& argv, Options& opts, std::ostream& out,
      std::ostream& err)
      : command_(std::move(command)), argv_(argv), o_(opts), out_(out), err_(err) {}

  int execute();

 private:
  int ingest();
  int stats();
  int train();
  int evaluate();
  int ablate();
  int sweep();
  int buckets();
  int export_attention();
  int gradcheck();
  int synth();

  std::vector<AdhocEventTree> load_data();
  model::TrainedModel load_model();
  eval::RunInfo info() const { return {o_.config.hyper.seed, train::config_digest(o_.config)}; }
  fs::path output(const std::string& name) {
    fs::create_directories(o_.out_dir);
    const fs::path p = fs::path(o_.out_dir) / name;
    outputs_.push_back(p.string());
    return p;
  }
  std::ofstream open(const std::string& name) {
    const fs::path p = output(name);
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << std::setprecision(10);
    return f;
  }
  void write_manifest(const json& extra);

  std::string command_;
  std::vector<std::string> argv_;
  Options& o_;
  std::ostream& out_;
  std::ostream& err_;
  std::vector<std::string> outputs_;
};

std::vector<AdhocEventTree> Run::load_data() {
  if (o_.data.empty()) throw ValidationError("--data is required for '" + command_ + "'");
  if (!fs::exists(o_.data)) throw ValidationError("data file not found: " + o_.data);
  ReadReport report = read_events(fs::path(o_.data));
  for (const auto& w : report.warnings) err_ << "warning: " << w << '\n';
  if (!report.errors.empty()) {
    for (const auto& e : report.errors) err_ << "error: " << e << '\n';
    throw ValidationError(std::to_string(report.errors.size()) + " invalid record(s) in " + o_.data);
  }
  if (report.events.empty()) throw ValidationError("no events in " + o_.data);
  return std::move(report.events);
}

model::TrainedModel Run::load_model() {
  if (o_.model_dir.empty()) throw ValidationError("--model is required for '" + command_ + "'");
  if (!fs::exists(fs::path(o_.model_dir) / "config.json")) {
    throw ValidationError("not a model directory: " + o_.model_dir);
  }
  model::TrainedModel m = train::load_model(o_.model_dir);
  // the stored configuration describes the model being scored
  o_.config = {m.hyper, m.ablation, m.caps};
  return m;
}

void Run::write_manifest(const json& extra) {
  json m;
  m["command"] = command_;
  m["argv"] = argv_;
  m["config"] = train::to_json(o_.config);
  m["config_digest"] = train::config_digest(o_.config);
  m["seed"] = o_.config.hyper.seed;
  if (!o_.data.empty()) {
    m["data"] = {{"path", o_.data}, {"digest", file_digest(o_.data)}};
  }
  if (!o_.model_dir.empty()) m["model"] = o_.model_dir;
  m["versions"] = {{"baet", BAET_VERSION},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"cli11", CLI11_VERSION},
                   {"compiler", __VERSION__},
                   {"checkpoint_format", ad::kCheckpointVersion}};
  m["outputs"] = outputs_;
  for (auto& [k, v] : extra.items()) m[k] = v;
  fs::create_directories(o_.out_dir);
  std::ofstream f(fs::path(o_.out_dir) / "manifest.json");
  f << m.dump(2) << '\n';
}

void write_stats(const DatasetStats& s, std::ostream& out) {
  out << "claims\tauthors\tposts\trumors\tnon_rumors\tmean_reposts\tmean_depth\n"
      << s.claims << '\t' << s.authors << '\t' << s.posts << '\t' << s.rumors << '\t' << s.non_rumors << '\t'
      << s.mean_reposts << '\t' << s.mean_depth << '\n';
}

json stats_json(const DatasetStats& s) {
  return {{"claims", s.claims},         {"authors", s.authors},           {"posts", s.posts},
          {"rumors", s.rumors},         {"non_rumors", s.non_rumors},     {"mean_reposts", s.mean_reposts},
          {"mean_depth", s.mean_depth}};
}

void write_metrics_row(std::ostream& out, const std::string& name, const Metrics& m) {
  out << name << '\t' << m.accuracy << '\t' << m.precision << '\t' << m.recall << '\t' << m.f1 << '\t' << m.tp
      << '\t' << m.fp << '\t' << m.fn << '\t' << m.tn << '\n';
}

void write_metrics_header(std::ostream& out, const eval::RunInfo& info) {
  out << "# seed=" << info.seed << " config_digest=" << info.config_digest << ' ' << kPositiveClassNote << '\n'
      << "split\taccuracy\tprecision\trecall\tf1\ttp\tfp\tfn\ttn\n";
}

int Run::ingest() {
  if (o_.data.empty()) throw ValidationError("--data is required for 'ingest'");
  if (!fs::exists(o_.data)) throw ValidationError("data file not found: " + o_.data);
  ReadReport report = read_events(fs::path(o_.data));
  for (const auto& w : report.warnings) err_ << "warning: " << w << '\n';
  for (const auto& e : report.errors) err_ << "error: " << e << '\n';
  const auto kept = prune_events(report.events);
  const fs::path events_path = o_.output.empty() ? output("events.jsonl") : fs::path(o_.output);
  if (!o_.output.empty()) outputs_.push_back(o_.output);
  write_events(kept, events_path);
  const DatasetStats s = dataset_stats(kept);
  auto f = open("stats.tsv");
  write_stats(s, f);
  write_stats(s, out_);
  out_ << "read " << report.events.size() + report.errors.size() << " record(s): " << report.errors.size()
       << " rejected, " << report.events.size() - kept.size() << " pruned, " << kept.size() << " kept\n";
  write_manifest({{"rejected", report.errors.size()},
                  {"pruned", report.events.size() - kept.size()},
                  {"kept", kept.size()},
                  {"stats", stats_json(s)}});
  return report.errors.empty() ? kOk : kValidation;
}

int Run::stats() {
  const auto events = load_data();
  const DatasetStats s = dataset_stats(events);
  auto f = open("stats.tsv");
  write_stats(s, f);
  write_stats(s, out_);
  write_manifest({{"stats", stats_json(s)}});
  return kOk;
}

int Run::train() {
  const auto events = load_data();
  const auto& hp = o_.config.hyper;
  const auto folds = train::kfold_split(events, hp.folds, hp.seed);
  out_ << "training " << folds.size() << " folds on " << events.size() << " events (d=" << hp.d
       << ", mu=" << hp.mu << ")\n";
  const auto cv = train::cross_validate(events, o_.config, folds, o_.jobs);

  json fold_json = json::array();
  for (std::size_t f = 0; f < folds.size(); ++f) {
    json train_ids = json::array();
    json test_ids = json::array();
    for (std::size_t i : folds[f].train) train_ids.push_back(events[i].event_id);
    for (std::size_t i : folds[f].test) test_ids.push_back(events[i].event_id);
    fold_json.push_back({{"fold", f}, {"train", train_ids}, {"test", test_ids}});
  }
  {
    auto f = open("folds.json");
    f << json{{"fold_hash", hex64(cv.fold_hash)}, {"folds", fold_json}}.dump(1) << '\n';
  }
  auto trace = open("trace.jsonl");
  for (std::size_t f = 0; f < cv.traces.size(); ++f) {
    for (const auto& r : cv.traces[f]) {
      trace << json{{"fold", f}, {"epoch", r.epoch}, {"split", r.split}, {"loss", r.loss}, {"accuracy", r.accuracy}}
                   .dump()
            << '\n';
    }
  }
  {
    auto m = open("metrics.tsv");
    write_metrics_header(m, info());
    for (std::size_t f = 0; f < cv.fold_metrics.size(); ++f)
      write_metrics_row(m, "fold" + std::to_string(f), cv.fold_metrics[f]);
    write_metrics_row(m, "mean", cv.mean);
  }
  out_ << "mean accuracy " << cv.mean.accuracy << ", F1 " << cv.mean.f1 << " (" << kPositiveClassNote << ")\n";

  json extra{{"fold_hash", hex64(cv.fold_hash)},
             {"mean", {{"accuracy", cv.mean.accuracy}, {"precision", cv.mean.precision},
                       {"recall", cv.mean.recall}, {"f1", cv.mean.f1}}}};
  if (!o_.skip_final) {
    const auto final_run = train::train_model(events, o_.config);
    for (const auto& r : final_run.trace) {
      trace << json{{"fold", "all"}, {"epoch", r.epoch}, {"split", r.split}, {"loss", r.loss}, {"accuracy", r.accuracy}}
                   .dump()
            << '\n';
    }
    const fs::path dir = output("model");
    train::save_model(final_run.model, dir);
    out_ << "model written to " << dir.string() << '\n';
  }
  write_manifest(extra);
  return kOk;
}

int Run::evaluate() {
  const auto model = load_model();
  const auto events = load_data();
  const Metrics m = train::evaluate(model, events);
  auto f = open("metrics.tsv");
  write_metrics_header(f, info());
  write_metrics_row(f, "test", m);
  write_metrics_header(out_, info());
  write_metrics_row(out_, "test", m);
  write_manifest({{"metrics", {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}}}});
  return kOk;
}

int Run::ablate() {
  const auto events = load_data();
  out_ << "running " << eval::ablation_variants().size() << " variants x " << o_.config.hyper.folds << " folds\n";
  const auto rows = eval::ablation_matrix(events, o_.config, o_.jobs);
  auto f = open("ablation.tsv");
  f << std::setprecision(10);
  eval::write_ablation_table(rows, info(), f);
  eval::write_ablation_table(rows, info(), out_);
  write_manifest({{"fold_hash", hex64(rows.front().fold_hash)}});
  return kOk;
}

int Run::sweep() {
  const auto events = load_data();
  train::GridSpec grid = train::GridSpec::single(o_.config.hyper);
  const std::map<std::string, std::vector<double>> defaults{
      {"mu", {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}},
      {"d", {16, 32, 64, 128, 256}},
      {"lr", {1e-3, 5e-3, 1e-4, 5e-4, 1e-5}},
      {"l2", {0.0, 1e-1, 1e-2, 1e-3, 1e-4}}};
  const auto it = defaults.find(o_.sweep_param);
  if (it == defaults.end()) throw ValidationError("--param must be one of mu, d, lr, l2");
  const std::vector<double>& values = o_.sweep_values.empty() ? it->second : o_.sweep_values;
  if (o_.sweep_param == "mu") grid.mu = values;
  if (o_.sweep_param == "lr") grid.learning_rate = values;
  if (o_.sweep_param == "l2") grid.l2 = values;
  if (o_.sweep_param == "d") {
    grid.d.clear();
    for (double v : values) {
      if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) throw ConfigError("d values must be positive integers");
      grid.d.push_back(static_cast<std::size_t>(v));
    }
  }
  out_ << "sweeping " << o_.sweep_param << " over " << values.size() << " values\n";
  const auto result = train::grid_search(events, grid, o_.config, o_.jobs);
  auto f = open("sweep_" + o_.sweep_param + ".tsv");
  const auto run_info = info();
  for (std::ostream* s : {static_cast<std::ostream*>(&f), &out_}) {
    *s << "# seed=" << run_info.seed << " config_digest=" << run_info.config_digest << ' ' << kPositiveClassNote
       << '\n';
    train::write_grid_table(result, *s);
  }
  write_manifest({{"param", o_.sweep_param},
                  {"values", values},
                  {"best", baet::to_json(result.best)}});
  return kOk;
}

int Run::buckets() {
  const auto model = load_model();
  const auto events = load_data();
  const std::vector<double> edges = o_.edges.empty() ? eval::default_bucket_edges() : o_.edges;
  const auto b = eval::bucket_by_post_count(model, events, edges);
  auto f = open("buckets.tsv");
  eval::write_bucket_table(b, info(), f);
  eval::write_bucket_table(b, info(), out_);
  write_manifest({{"edges", edges.back() == eval::kOpenEnd ? json("default") : json(edges)}});
  return kOk;
}

int Run::export_attention() {
  const auto model = load_model();
  const auto events = load_data();
  auto f = open("attention.jsonl");
  std::size_t written = 0;
  for (const auto& e : events) {
    if (!o_.event_id.empty() && e.event_id != o_.event_id) continue;
    for (const auto& rec : eval::export_attention(model, e)) {
      f << eval::to_json(rec, info()).dump() << '\n';
      ++written;
    }
  }
  if (!o_.event_id.empty() && written == 0) throw ValidationError("event not found: " + o_.event_id);
  out_ << written << " attention record(s) written\n";
  write_manifest({{"records", written}});
  return kOk;
}

int Run::gradcheck() {
  eval::GradCheckSetup setup;
  setup.d = o_.config.hyper.d;
  setup.max_len = o_.config.hyper.max_len;
  setup.nodes = o_.nodes;
  setup.seed = o_.config.hyper.seed;
  setup.ablation = o_.config.ablation;
  const auto report = eval::gradient_check(setup);
  const bool ok = report.max_relative_error < o_.threshold;
  out_ << "max relative error " << report.max_relative_error << " (" << report.worst_parameter << '['
       << report.worst_index << "], " << report.coordinates << " coordinates) "
       << (ok ? "PASS" : "FAIL") << " threshold " << o_.threshold << '\n';
  auto f = open("gradcheck.json");
  f << json{{"max_relative_error", report.max_relative_error},
            {"worst_parameter", report.worst_parameter},
            {"worst_index", report.worst_index},
            {"coordinates", report.coordinates},
            {"threshold", o_.threshold},
            {"nodes", o_.nodes},
            {"passed", ok}}
           .dump(2)
    << '\n';
  write_manifest({{"nodes", o_.nodes}});
  return ok ? kOk : kRuntime;
}

int Run::synth() {
  eval::SyntheticSpec spec;
  spec.events = o_.events;
  spec.marker_probability = o_.marker_probability;
  spec.rumor_fraction = o_.rumor_fraction;
  spec.seed = o_.config.hyper.seed;
  const auto events = eval::generate_synthetic(spec);
  const fs::path path = o_.output.empty() ? output("synthetic.jsonl") : fs::path(o_.output);
  if (!o_.output.empty()) outputs_.push_back(o_.output);
  write_events(events, path);
  out_ << events.size() << " events written to " << path.string() << '\n';
  write_manifest({{"synthetic",
                   {{"events", spec.events},
                    {"rumor_fraction", spec.rumor_fraction},
                    {"marker", spec.marker},
                    {"marker_probability", spec.marker_probability}}}});
  return kOk;
}

int Run::execute() {
  if (command_ == "ingest") return ingest();
  if (command_ == "stats") return stats();
  if (command_ == "train") return train();
  if (command_ == "eval") return evaluate();
  if (command_ == "ablate") return ablate();
  if (command_ == "sweep") return sweep();
  if (command_ == "buckets") return buckets();
  if (command_ == "export-attention") return export_attention();
  if (command_ == "gradcheck") return gradcheck();
  if (command_ == "synth") return synth();
  throw ValidationError("unknown command '" + command_ + "'");
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  o.out_dir = default_out_dir();
  Hyperparams& hp = o.config.hyper;

  CLI::App app{"Rumor detection on bipartite adhoc event trees", args.empty() ? "baet" : args.front()};
  app.set_version_flag("--version", BAET_VERSION);
  app.set_config("--config", "", "key=value configuration file; command-line flags take precedence");
  app.fallthrough();
  app.require_subcommand(1);

  app.add_option("--data", o.data, "Canonical event file (one JSON record per line)");
  app.add_option("--model", o.model_dir, "Model directory written by 'train'");
  app.add_option("--out", o.out_dir, "Output directory (default: $BAET_OUTPUT_DIR or ./baet-out)");
  app.add_option("--jobs", o.jobs, "Worker threads (0 = all cores)");
  app.add_option("--seed", hp.seed, "Root random seed")->capture_default_str();
  app.add_option("--d", hp.d, "Embedding and hidden width")->capture_default_str();
  app.add_option("--mu", hp.mu, "Root-aware fusion weight")->capture_default_str();
  app.add_option("--lr", hp.learning_rate, "Adam learning rate")->capture_default_str();
  app.add_option("--l2", hp.l2, "L2 penalty weight")->capture_default_str();
  app.add_option("--dropout", hp.dropout, "Dropout rate")->capture_default_str();
  app.add_option("--batch-size", hp.batch_size, "Mini-batch size")->capture_default_str();
  app.add_option("--epochs", hp.epochs, "Training epochs")->capture_default_str();
  app.add_option("--folds", hp.folds, "Cross-validation folds")->capture_default_str();
  app.add_option("--max-len", hp.max_len, "Tokens kept per post")->capture_default_str();
  app.add_option("--min-count", hp.min_count, "Vocabulary frequency threshold")->capture_default_str();
  app.add_option("--patience", hp.patience, "Early-stopping patience (0 = off)")->capture_default_str();
  app.add_option("--disable", o.disable, "Ablate modules, e.g. post.ral,author.tal")->delimiter(',');
  app.add_flag("--no-post-tree", o.no_post_tree, "Drop the post tree");
  app.add_flag("--no-author-tree", o.no_author_tree, "Drop the author tree");

  auto* ingest = app.add_subcommand("ingest", "Validate, prune and summarise an event file");
  ingest->add_option("--output", o.output, "Pruned event file (default <out>/events.jsonl)");
  app.add_subcommand("stats", "Dataset summary");
  app.add_subcommand("train", "Cross-validate, then fit a model on all events")
      ->add_flag("--skip-final", o.skip_final, "Do not fit the final model");
  app.add_subcommand("eval", "Score a trained model");
  app.add_subcommand("ablate", "Cross-validate the full model and all ablation variants");
  auto* sweep = app.add_subcommand("sweep", "Cross-validate over one hyperparameter grid");
  sweep->add_option("--param", o.sweep_param, "mu, d, lr or l2")->capture_default_str();
  sweep->add_option("--values", o.sweep_values, "Grid values (default: published grid)")->delimiter(',');
  app.add_subcommand("buckets", "Accuracy by responsive post count")
      ->add_option("--edges", o.edges, "Bucket edges, e.g. 0,10,25,50,100,150,inf")
      ->delimiter(',');
  app.add_subcommand("export-attention", "Write tree attention weights")
      ->add_option("--event", o.event_id, "Only this event id");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check on a random event");
  gradcheck->add_option("--nodes", o.nodes, "Tree size")->capture_default_str();
  gradcheck->add_option("--threshold", o.threshold, "Maximum accepted relative error")->capture_default_str();
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled corpus");
  synth->add_option("--events", o.events, "Number of events")->capture_default_str();
  synth->add_option("--marker-prob", o.marker_probability, "Marker probability in rumor claims")
      ->capture_default_str();
  synth->add_option("--rumor-fraction", o.rumor_fraction, "Share of rumor events")->capture_default_str();
  synth->add_option("--output", o.output, "Output file (default <out>/synthetic.jsonl)");

  const auto commands = app.get_subcommands([](const CLI::App*) { return true; });
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i].starts_with("-")) continue;
    const bool known = std::any_of(commands.begin(), commands.end(),
                                   [&](const CLI::App* s) { return s->get_name() == args[i]; });
    if (!known && (i == 1 || !args[i - 1].starts_with("-"))) {
      err << "unknown command '" << args[i] << "'\n" << app.help();
      return kValidation;
    }
    break;
  }

  try {
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("baet");
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kValidation;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  if (command == "gradcheck") {
    if (app.count("--d") == 0) hp.d = 8;
    if (app.count("--max-len") == 0) hp.max_len = 6;
  }

  try {
    apply_disables(o);
    o.config.validate();
    Run run(command, args, o, out, err);
    return run.execute();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kValidation;
  } catch (const IngestError& e) {
    err << "input error: " << e.what() << '\n';
    return kValidation;
  } catch (const eval::InvalidSpec& e) {
    err << "invalid synthetic spec: " << e.what() << '\n';
    return kValidation;
  } catch (const train::TooFewSamples& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace baet::cli
