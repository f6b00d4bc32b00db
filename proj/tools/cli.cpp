#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hiercas/cascade.hpp"
#include "hiercas/checkpoint.hpp"
#include "hiercas/errors.hpp"
#include "hiercas/model.hpp"
#include "hiercas/random.hpp"
#include "hiercas/synthgen.hpp"
#include "hiercas/training.hpp"

#ifndef HIERCAS_VERSION
#define HIERCAS_VERSION "0.1.0"
#endif

namespace hiercas::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string version_string() { return HIERCAS_VERSION; }

namespace {

// Bad flags or inputs named on the command line.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(path)) {
    throw UsageError(std::string(what) + " file '" + path + "' does not exist");
  }
}

// ---------------------------------------------------------------------------
// Flag groups. Each remembers which options were given explicitly so a
// checkpoint's stored settings can be compared against them.

template <typename Cfg>
struct Given {
  std::vector<std::pair<CLI::Option*, std::function<void(Cfg&)>>> setters;

  void add(CLI::Option* opt, std::function<void(Cfg&)> set) {
    setters.emplace_back(opt, std::move(set));
  }
  void apply_given(Cfg& target) const {
    for (const auto& [opt, set] : setters) {
      if (opt->count() > 0) set(target);
    }
  }
};

struct DataFlags {
  std::string data;
  bool strict = false;
  data::ObservationConfig obs;
  std::int64_t time_unit = 1;
  Given<data::ObservationConfig> given;

  void attach(CLI::App& app, bool data_required = true) {
    auto* d = app.add_option("--data", data, "Cascade corpus file");
    if (data_required) d->required();
    app.add_flag("--strict", strict, "Fail on the first malformed corpus line");
    given.add(app.add_option("--t-obs", obs.t_obs, "Observation window T_o (corpus time units)")
                  ->capture_default_str(),
              [this](auto& c) { c.t_obs = obs.t_obs; });
    given.add(app.add_option("--t-pred", obs.t_pred, "Prediction horizon T_p (corpus time units)")
                  ->capture_default_str(),
              [this](auto& c) { c.t_pred = obs.t_pred; });
    given.add(app.add_option("--time-unit", time_unit, "Corpus units per model time unit")
                  ->check(CLI::IsMember({std::int64_t{1}, std::int64_t{86400}}))
                  ->capture_default_str(),
              [this](auto& c) { c.time_unit = static_cast<double>(time_unit); });
    given.add(app.add_option("--min-observed", obs.min_observed,
                             "Minimum observed retweets for a cascade to be used")
                  ->capture_default_str(),
              [this](auto& c) { c.min_observed = obs.min_observed; });
    given.add(app.add_option("--max-observed", obs.max_observed,
                             "Observed retweets kept per cascade")
                  ->capture_default_str(),
              [this](auto& c) { c.max_observed = obs.max_observed; });
  }

  data::ObservationConfig resolve() {
    obs.time_unit = static_cast<double>(time_unit);
    obs.validate();
    return obs;
  }
};

struct ModelFlags {
  model::HierCasConfig cfg;
  std::size_t dim = 64;
  std::string direction = "undirected";
  std::string pool_time = "observation";
  Given<model::HierCasConfig> given;

  void attach(CLI::App& app) {
    given.add(app.add_option("--layers", cfg.layers, "Attention layers L")->capture_default_str(),
              [this](auto& c) { c.layers = cfg.layers; });
    given.add(app.add_option("--heads", cfg.heads, "Attention heads")->capture_default_str(),
              [this](auto& c) { c.heads = cfg.heads; });
    given.add(app.add_option("--neighbors", cfg.n_sample, "Sampled temporal neighbors")
                  ->capture_default_str(),
              [this](auto& c) { c.n_sample = cfg.n_sample; });
    given.add(app.add_option("--dim", dim, "Embedding and hidden width")->capture_default_str(),
              [this](auto& c) { c.set_dim(dim); });
    given.add(app.add_option("--user-buckets", cfg.user_buckets, "Hashed user-table rows")
                  ->capture_default_str(),
              [this](auto& c) { c.user_buckets = cfg.user_buckets; });
    given.add(app.add_option("--size-vocab", cfg.size_vocab, "Rows of the size-change table")
                  ->capture_default_str(),
              [this](auto& c) { c.size_vocab = cfg.size_vocab; });
    given.add(app.add_flag("--exact-users", cfg.exact_users,
                           "Give every training user its own embedding row"),
              [this](auto& c) { c.exact_users = cfg.exact_users; });
    given.add(app.add_flag("--no-time", cfg.no_time, "Ablation: zero the time encoding"),
              [this](auto& c) { c.no_time = cfg.no_time; });
    given.add(app.add_flag("--no-size", cfg.no_size, "Ablation: zero the size encoding"),
              [this](auto& c) { c.no_size = cfg.no_size; });
    given.add(app.add_flag("--mean-agg", cfg.mean_agg,
                           "Ablation: mean aggregation instead of attention"),
              [this](auto& c) { c.mean_agg = cfg.mean_agg; });
    given.add(app.add_flag("--no-multi", cfg.no_multi, "Ablation: pool the last layer only"),
              [this](auto& c) { c.no_multi = cfg.no_multi; });
    given.add(app.add_flag("--self-in-kv", cfg.self_in_kv,
                           "Add the node itself to the attention keys/values"),
              [this](auto& c) { c.self_in_kv = cfg.self_in_kv; });
    given.add(app.add_option("--neighbor-direction", direction, "Edges used as neighbors")
                  ->check(CLI::IsMember({"undirected", "in", "out"}))
                  ->capture_default_str(),
              [this](auto& c) { c.direction = sampling::parse_direction(direction); });
    given.add(app.add_option("--pool-time", pool_time, "Time at which pooled features are read")
                  ->check(CLI::IsMember({"observation", "join"}))
                  ->capture_default_str(),
              [this](auto& c) { c.pool_time = model::parse_pool_time(pool_time); });
  }

  model::HierCasConfig resolve() {
    model::HierCasConfig c = cfg;
    c.set_dim(dim);
    c.direction = sampling::parse_direction(direction);
    c.pool_time = model::parse_pool_time(pool_time);
    c.validate();
    return c;
  }
};

struct TrainFlags {
  train::TrainConfig cfg;
  bool quiet = false;
  std::string out_dir = "hiercas_out";

  void attach(CLI::App& app) {
    app.add_option("--lr", cfg.lr, "AdamW learning rate")->capture_default_str();
    app.add_option("--batch", cfg.batch_size, "Mini-batch size")->capture_default_str();
    app.add_option("--epochs", cfg.max_epochs, "Maximum epochs")->capture_default_str();
    app.add_option("--patience", cfg.patience, "Early-stopping patience (epochs)")
        ->capture_default_str();
    app.add_option("--weight-decay", cfg.weight_decay, "Decoupled weight decay")
        ->capture_default_str();
    app.add_option("--clip", cfg.clip_norm, "Global gradient-norm cap (0 disables)")
        ->capture_default_str();
    app.add_flag("--fixed-sampling", cfg.fixed_sampling,
                 "Draw neighborhoods once instead of every epoch");
    app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", cfg.threads, "Worker threads (0 = all cores)")
        ->capture_default_str();
    app.add_flag("--quiet", quiet, "Suppress per-epoch progress");
    app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  }

  train::TrainConfig resolve() const {
    cfg.validate();
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Pipeline pieces shared by several commands.

struct Corpus {
  std::string path;
  std::vector<data::CascadeRecord> records;
  std::size_t skipped = 0;
  std::string hash;
};

Corpus load_corpus(const std::string& path, bool strict, std::ostream& err) {
  require_file(path, "corpus");
  Corpus c;
  c.path = path;
  c.hash = hex64(fnv1a64(read_file(path)));
  data::CorpusReadResult res = data::read_corpus(path, strict);
  c.records = std::move(res.records);
  c.skipped = res.skipped;
  if (c.skipped > 0) {
    err << "warning: skipped " << c.skipped << " malformed line(s); first: " << res.first_error
        << '\n';
  }
  return c;
}

std::vector<data::LabeledCascade> label_all(const Corpus& corpus,
                                            const data::ObservationConfig& obs) {
  std::vector<data::LabeledCascade> out;
  for (const data::CascadeRecord& r : corpus.records) {
    if (auto lc = data::build_labeled(r, obs)) out.push_back(std::move(*lc));
  }
  return out;
}

std::uint64_t split_seed(std::uint64_t seed) { return mix_seed(seed, fnv1a64("split")); }
std::uint64_t init_seed(std::uint64_t seed) { return mix_seed(seed, fnv1a64("init")); }

data::Splits<data::LabeledCascade> split(const std::vector<data::LabeledCascade>& all,
                                         std::uint64_t seed) {
  if (all.empty()) {
    throw UsageError("no cascade has enough observed retweets (see --min-observed)");
  }
  auto s = data::split_dataset(all, data::SplitRatios{}, split_seed(seed));
  if (s.train.empty() || s.val.empty() || s.test.empty()) {
    throw UsageError("only " + std::to_string(all.size()) +
                     " usable cascade(s); every split needs at least one");
  }
  return s;
}

model::UserIndex make_users(const model::HierCasConfig& cfg,
                            const std::vector<data::LabeledCascade>& train_set) {
  std::vector<std::string> vocab;
  if (cfg.exact_users) {
    std::set<std::string> users;
    for (const auto& c : train_set) {
      for (const auto& n : c.graph.nodes()) users.insert(n.user);
    }
    vocab.assign(users.begin(), users.end());
  }
  return model::UserIndex(cfg.user_buckets, std::move(vocab));
}

struct Trained {
  train::TrainResult result;
  train::MetricsReport val;
  train::MetricsReport test;
};

Trained train_and_test(const data::Splits<data::LabeledCascade>& splits,
                       const model::HierCasConfig& mcfg, const train::TrainConfig& tcfg,
                       bool quiet, std::ostream& err) {
  model::HierCas m = model::HierCas::create(mcfg, make_users(mcfg, splits.train),
                                            init_seed(tcfg.seed));
  train::EpochCallback log;
  if (!quiet) {
    log = [&err](const train::EpochRecord& r) {
      err << "epoch " << r.epoch << " train_msle=" << fmt_double(r.train_loss)
          << " val_msle=" << fmt_double(r.val_msle) << '\n';
      return true;
    };
  }
  Trained t{train::train(std::move(m), splits.train, splits.val, tcfg, log), {}, {}};
  const std::uint64_t seed = train::eval_sample_seed(tcfg.seed);
  t.val = train::evaluate(t.result.best, splits.val, seed, tcfg.threads);
  t.test = train::evaluate(t.result.best, splits.test, seed, tcfg.threads);
  return t;
}

Json metrics_object(const train::MetricsReport& r) { return Json::parse(train::metrics_json(r)); }

Json manifest(const std::string& command, std::uint64_t seed, const Corpus* corpus,
              const Json& settings) {
  Json m;
  m["tool"] = "hiercas";
  m["version"] = version_string();
  m["command"] = command;
  m["seed"] = seed;
  if (corpus != nullptr) {
    m["corpus"] = Json{{"path", corpus->path},
                       {"fnv1a64", corpus->hash},
                       {"records", corpus->records.size()},
                       {"skipped_lines", corpus->skipped}};
  }
  m["settings"] = settings;
  return m;
}

std::string predictions_csv(const train::MetricsReport& r) {
  std::string out = "cascade_id,predicted,truth\n";
  for (const auto& row : r.rows) {
    out += row.id + ',' + fmt_double(row.predicted) + ',' + fmt_double(row.truth) + '\n';
  }
  return out;
}

std::string history_csv(const std::vector<train::EpochRecord>& history) {
  std::string out = "epoch,train_msle,val_msle,val_smape,val_r2\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + ',' + fmt_double(r.train_loss) + ',' +
           fmt_double(r.val_msle) + ',' + fmt_double(r.val_smape) + ',' +
           (r.val_r2 ? fmt_double(*r.val_r2) : std::string()) + '\n';
  }
  return out;
}

io::Checkpoint open_checkpoint(const std::string& path) {
  require_file(path, "checkpoint");
  return io::load_checkpoint(path);
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_train(DataFlags& df, ModelFlags& mf, TrainFlags& tf, std::ostream& out,
              std::ostream& err) {
  const data::ObservationConfig obs = df.resolve();
  const model::HierCasConfig mcfg = mf.resolve();
  const train::TrainConfig tcfg = tf.resolve();
  const Corpus corpus = load_corpus(df.data, df.strict, err);
  const auto all = label_all(corpus, obs);
  const auto splits = split(all, tcfg.seed);

  const Trained t = train_and_test(splits, mcfg, tcfg, tf.quiet, err);
  io::Checkpoint ckpt{t.result.best, t.result.state, obs, tcfg};

  const fs::path dir = tf.out_dir;
  fs::create_directories(dir);
  io::save_checkpoint(ckpt, dir / "checkpoint.hcas");
  Json metrics{{"val", metrics_object(t.val)},
               {"test", metrics_object(t.test)},
               {"best_epoch", t.result.best_epoch},
               {"epochs_run", t.result.history.size()},
               {"splits", Json{{"train", splits.train.size()},
                               {"val", splits.val.size()},
                               {"test", splits.test.size()}}}};
  write_file(dir / "metrics.json", metrics.dump(2) + '\n');
  write_file(dir / "history.csv", history_csv(t.result.history));
  write_file(dir / "test_predictions.csv", predictions_csv(t.test));
  write_file(dir / "manifest.json",
             manifest("train", tcfg.seed, &corpus,
                      Json::parse(io::settings_json(mcfg, obs, tcfg)))
                     .dump(2) +
                 '\n');
  out << metrics.dump() << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, DataFlags& df, ModelFlags& mf,
             const std::string& which, const std::string& out_dir, std::size_t threads,
             std::ostream& out, std::ostream& err) {
  io::Checkpoint ckpt = open_checkpoint(ckpt_path);

  model::HierCasConfig requested = ckpt.model.config;
  mf.given.apply_given(requested);
  std::vector<std::string> diff = io::config_diff(ckpt.model.config, requested);
  data::ObservationConfig obs = ckpt.observation;
  df.given.apply_given(obs);
  for (auto& line : io::config_diff(ckpt.observation, obs)) diff.push_back(std::move(line));
  if (!diff.empty()) throw io::ConfigMismatchError(std::move(diff));

  const Corpus corpus = load_corpus(df.data, df.strict, err);
  const auto all = label_all(corpus, obs);
  std::vector<data::LabeledCascade> subset;
  if (which == "all") {
    subset = all;
  } else {
    auto splits = split(all, ckpt.train.seed);
    subset = which == "train" ? splits.train : which == "val" ? splits.val : splits.test;
  }
  if (subset.empty()) throw UsageError("no usable cascades to evaluate");

  const train::MetricsReport report =
      train::evaluate(ckpt.model, subset, train::eval_sample_seed(ckpt.train.seed), threads);
  const std::string json = train::metrics_json(report);
  if (!out_dir.empty()) {
    const fs::path dir = out_dir;
    write_file(dir / "eval_metrics.json", json + '\n');
    write_file(dir / "eval_predictions.csv", predictions_csv(report));
    Json settings = Json::parse(io::settings_json(ckpt.model.config, obs, ckpt.train));
    settings["split"] = which;
    settings["checkpoint"] = ckpt_path;
    write_file(dir / "eval_manifest.json",
               manifest("eval", ckpt.train.seed, &corpus, settings).dump(2) + '\n');
  }
  out << json << '\n';
  return kExitOk;
}

int cmd_sweep(const std::string& param, std::vector<std::size_t> values, DataFlags& df,
              ModelFlags& mf, TrainFlags& tf, std::ostream& out, std::ostream& err) {
  if (values.empty()) {
    values = param == "layers" ? std::vector<std::size_t>{0, 1, 2, 3}
                               : std::vector<std::size_t>{5, 10, 15, 20, 25};
  }
  const data::ObservationConfig obs = df.resolve();
  const model::HierCasConfig base = mf.resolve();
  const train::TrainConfig tcfg = tf.resolve();
  std::vector<model::HierCasConfig> configs;
  for (std::size_t v : values) {
    model::HierCasConfig c = base;
    (param == "layers" ? c.layers : c.n_sample) = v;
    c.validate();
    configs.push_back(c);
  }
  const Corpus corpus = load_corpus(df.data, df.strict, err);
  const auto splits = split(label_all(corpus, obs), tcfg.seed);

  std::string csv = "param,value,msle,smape,r2\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!tf.quiet) err << "sweep " << param << '=' << values[i] << '\n';
    const Trained t = train_and_test(splits, configs[i], tcfg, tf.quiet, err);
    csv += param + ',' + std::to_string(values[i]) + ',' + fmt_double(t.test.msle) + ',' +
           fmt_double(t.test.smape) + ',' + (t.test.r2 ? fmt_double(*t.test.r2) : "") + '\n';
  }
  const fs::path dir = tf.out_dir;
  write_file(dir / ("sweep_" + param + ".csv"), csv);
  Json settings = Json::parse(io::settings_json(base, obs, tcfg));
  settings["sweep"] = Json{{"param", param}, {"values", values}};
  write_file(dir / ("sweep_" + param + "_manifest.json"),
             manifest("sweep", tcfg.seed, &corpus, settings).dump(2) + '\n');
  out << csv;
  return kExitOk;
}

int cmd_export_attention(const std::string& ckpt_path, const std::string& cascade_id,
                         DataFlags& df, const std::string& out_path, std::ostream& out,
                         std::ostream& err) {
  const io::Checkpoint ckpt = open_checkpoint(ckpt_path);
  const Corpus corpus = load_corpus(df.data, df.strict, err);
  const auto it = std::find_if(corpus.records.begin(), corpus.records.end(),
                               [&](const data::CascadeRecord& r) { return r.id == cascade_id; });
  if (it == corpus.records.end()) {
    throw UsageError("cascade '" + cascade_id + "' is not in the corpus");
  }
  const data::CascadeGraph graph = data::build_observed_graph(*it, ckpt.observation);
  const std::uint64_t seed =
      train::cascade_sample_seed(train::eval_sample_seed(ckpt.train.seed), cascade_id);
  const std::vector<double> w = model::pooling_weights(ckpt.model, graph, seed);

  std::string csv = "user_id,join_time,weight\n";
  for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
    csv += graph.nodes()[v].user + ',' + fmt_double(graph.nodes()[v].join_time) + ',' +
           fmt_double(w[v]) + '\n';
  }
  if (!out_path.empty()) {
    write_file(out_path, csv);
    Json settings = Json::parse(
        io::settings_json(ckpt.model.config, ckpt.observation, ckpt.train));
    settings["cascade_id"] = cascade_id;
    settings["checkpoint"] = ckpt_path;
    write_file(out_path + ".manifest.json",
               manifest("export-attention", ckpt.train.seed, &corpus, settings).dump(2) + '\n');
  }
  out << csv;
  return kExitOk;
}

int cmd_generate(const synth::GenParams& p, std::size_t n, const std::string& out_path,
                 std::ostream& out) {
  p.validate();
  synth::generate_corpus(p, n, out_path);
  const Json settings{{"cascades", n},
                      {"base_branching", p.base_branching},
                      {"child_branching", p.child_branching},
                      {"decay_rate", p.decay_rate},
                      {"user_pool", p.user_pool},
                      {"influence_sigma", p.influence_sigma},
                      {"horizon", p.horizon},
                      {"max_events", p.max_events},
                      {"publish_time", p.publish_time}};
  Corpus written{out_path, {}, 0, hex64(fnv1a64(read_file(out_path)))};
  Json m = manifest("generate", p.seed, nullptr, settings);
  m["output"] = Json{{"path", out_path}, {"fnv1a64", written.hash}, {"records", n}};
  write_file(out_path + ".manifest.json", m.dump(2) + '\n');
  out << "wrote " << n << " cascades to " << out_path << '\n';
  return kExitOk;
}

int cmd_stats(DataFlags& df, std::ostream& out, std::ostream& err) {
  const data::ObservationConfig obs = df.resolve();
  const Corpus corpus = load_corpus(df.data, df.strict, err);
  const auto all = label_all(corpus, obs);
  if (all.empty()) throw UsageError("no cascade has enough observed retweets (see --min-observed)");
  const data::CorpusStats s = data::corpus_stats(all);
  const Json j{{"records", corpus.records.size()},
               {"skipped_lines", corpus.skipped},
               {"cascades", s.cascades},
               {"nodes", s.nodes},
               {"edges", s.edges},
               {"average_hops", s.average_hops},
               {"average_growth", s.average_growth}};
  out << j.dump() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"HierCas cascade popularity prediction", "hiercas"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  // train
  DataFlags train_data;
  ModelFlags train_model;
  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, metrics, manifest");
  train_data.attach(*train_cmd);
  train_model.attach(*train_cmd);
  train_flags.attach(*train_cmd);

  // eval
  DataFlags eval_data;
  ModelFlags eval_model;
  std::string eval_ckpt, eval_split = "all", eval_out;
  std::size_t eval_threads = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_data.attach(*eval_cmd);
  eval_model.attach(*eval_cmd);
  eval_cmd->add_option("--split", eval_split, "Cascades to score")
      ->check(CLI::IsMember({"all", "train", "val", "test"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Directory for metrics, predictions and manifest");
  eval_cmd->add_option("--threads", eval_threads, "Worker threads (0 = all cores)");

  // sweep
  DataFlags sweep_data;
  ModelFlags sweep_model;
  TrainFlags sweep_flags;
  std::string sweep_param;
  std::vector<std::size_t> sweep_values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Test metrics as one hyperparameter varies");
  sweep_cmd->add_option("--param", sweep_param, "Swept hyperparameter")
      ->required()
      ->check(CLI::IsMember({"layers", "neighbors"}));
  sweep_cmd->add_option("--values", sweep_values, "Values (default: 0..3 or 5,10,...,25)")
      ->delimiter(',');
  sweep_data.attach(*sweep_cmd);
  sweep_model.attach(*sweep_cmd);
  sweep_flags.attach(*sweep_cmd);

  // export-attention
  DataFlags attn_data;
  std::string attn_ckpt, attn_id, attn_out;
  auto* attn_cmd =
      app.add_subcommand("export-attention", "Pooling weights of the last layer for one cascade");
  attn_cmd->add_option("--checkpoint", attn_ckpt, "Checkpoint file")->required();
  attn_cmd->add_option("--cascade", attn_id, "Cascade id")->required();
  attn_cmd->add_option("--data", attn_data.data, "Cascade corpus file")->required();
  attn_cmd->add_flag("--strict", attn_data.strict, "Fail on the first malformed corpus line");
  attn_cmd->add_option("--out", attn_out, "CSV output file (stdout only when omitted)");

  // generate
  synth::GenParams gen;
  std::size_t gen_n = 1000;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic cascade corpus");
  gen_cmd->add_option("--out", gen_out, "Corpus file to write")->required();
  gen_cmd->add_option("--cascades", gen_n, "Number of cascades")->capture_default_str();
  gen_cmd->add_option("--base-branching", gen.base_branching, "Mean direct retweets of the root")
      ->capture_default_str();
  gen_cmd->add_option("--child-branching", gen.child_branching,
                      "Mean retweets of a retweeter (< 1)")
      ->capture_default_str();
  gen_cmd->add_option("--decay-rate", gen.decay_rate, "Exponential delay rate per time unit")
      ->capture_default_str();
  gen_cmd->add_option("--user-pool", gen.user_pool, "Number of distinct users")
      ->capture_default_str();
  gen_cmd->add_option("--influence-sigma", gen.influence_sigma,
                      "Log-normal spread of user influence")
      ->capture_default_str();
  gen_cmd->add_option("--horizon", gen.horizon, "Last offset kept")->capture_default_str();
  gen_cmd->add_option("--max-events", gen.max_events, "Retweet cap per cascade")
      ->capture_default_str();
  gen_cmd->add_option("--publish-time", gen.publish_time, "Publication timestamp of every cascade")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();

  // stats
  DataFlags stats_data;
  auto* stats_cmd = app.add_subcommand("stats", "Summary statistics of the usable cascades");
  stats_data.attach(*stats_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    if (!app.get_subcommands().empty()) {
      err << "run 'hiercas " << app.get_subcommands().front()->get_name()
          << " --help' for usage\n";
    } else {
      err << "run 'hiercas --help' for usage\n";
    }
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_data, train_model, train_flags, out, err);
    if (*eval_cmd) {
      return cmd_eval(eval_ckpt, eval_data, eval_model, eval_split, eval_out, eval_threads, out,
                      err);
    }
    if (*sweep_cmd) {
      return cmd_sweep(sweep_param, sweep_values, sweep_data, sweep_model, sweep_flags, out, err);
    }
    if (*attn_cmd) return cmd_export_attention(attn_ckpt, attn_id, attn_data, attn_out, out, err);
    if (*gen_cmd) return cmd_generate(gen, gen_n, gen_out, out);
    if (*stats_cmd) return cmd_stats(stats_data, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const io::ConfigMismatchError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const train::DivergenceError& e) {
    err << "error: " << e.what() << " after " << e.history().size() << " epoch(s)\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace hiercas::cli
