#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>

#include "ebmc/artifacts.hpp"
#include "ebmc/checkpoint.hpp"
#include "ebmc/config.hpp"
#include "ebmc/csv.hpp"
#include "ebmc/errors.hpp"
#include "ebmc/seed.hpp"
#include "ebmc/settings.hpp"
#include "ebmc/synthetic.hpp"
#include "ebmc/trainer.hpp"
#include "hash.hpp"

namespace ebmc::cli {
namespace {

namespace fs = std::filesystem;
using artifacts::RunHeader;
using nlohmann::ordered_json;

enum class Kind { Text, Count, Positional };

struct FlagSpec {
  std::string name;
  Kind kind;
  bool required;
  std::string help;
};

struct CommandSpec {
  std::string name;
  std::string help;
  std::vector<FlagSpec> flags;
};

const FlagSpec kSeed{"--seed", Kind::Count, false, "Master seed; overrides the config or checkpoint seed"};
const FlagSpec kOut{"--out", Kind::Text, true, "Output directory"};
const FlagSpec kData{"--data", Kind::Text, true, "Dataset directory written by generate"};
const FlagSpec kConfig{"--config", Kind::Text, true, "Training config (key = value text)"};
const FlagSpec kCheckpoint{"--checkpoint", Kind::Text, true, "Checkpoint written by train"};
const FlagSpec kDisable{"--disable", Kind::Text, false, "Comma list of modules to disable: msd,cce,emc,imtd"};

const std::vector<CommandSpec>& commands() {
  static const std::vector<CommandSpec> specs = {
      {"generate",
       "Write a synthetic dataset (train/ and test/) and its Bayes oracle report",
       {{"--spec", Kind::Text, false, "Generator spec file; default imbalanced spec when omitted"},
        kOut,
        {"--n", Kind::Count, false, "Training samples; default samples_per_class * num_classes"},
        {"--test-n", Kind::Count, false, "Test samples; default 4000"},
        kSeed}},
      {"train", "Run both training stages and write checkpoints and logs", {kConfig, kData, kOut, kSeed, kDisable}},
      {"eval",
       "Evaluate a checkpoint on the test split under one condition",
       {kCheckpoint,
        kData,
        kOut,
        {"--condition", Kind::Text, false, "full (default), a modality subset such as text+audio, or p=<rate>"},
        kSeed}},
      {"ablate",
       "Train the full model and one with the listed modules disabled, evaluate both",
       {kConfig, kData, kOut, kSeed,
        {"--disable", Kind::Text, false, "Comma list of modules to ablate together; only the full model when omitted"}}},
      {"robust",
       "Evaluate a checkpoint under a robustness protocol",
       {kCheckpoint,
        kData,
        kOut,
        {"--protocol", Kind::Text, true, "modality-missing or feature-dropout"},
        kSeed}},
      {"report",
       "Aggregate run directories into mean and std tables and trajectory CSVs",
       {{"runs", Kind::Positional, true, "Run directories written by train"}, kOut}},
  };
  return specs;
}

// Values given on the command line, readable only under a declared flag name.
class Args {
 public:
  explicit Args(const CommandSpec& spec) : spec_(&spec) {
    for (const auto& f : spec.flags) text_[f.name];
  }

  std::string& slot(const std::string& flag) { return text_.at(flag); }
  std::vector<std::string>& positional() { return positional_; }

  bool has(const std::string& flag) const { return !value(flag).empty(); }
  const std::set<std::string>& read() const { return read_; }
  const std::string& text(const std::string& flag) const { return value(flag); }
  std::optional<std::uint64_t> count(const std::string& flag) const {
    const auto& v = value(flag);
    if (v.empty()) return std::nullopt;
    return static_cast<std::uint64_t>(csv::parse_int(v));
  }
  const std::vector<std::string>& runs() const {
    value("runs");
    return positional_;
  }

 private:
  const std::string& value(const std::string& flag) const {
    const auto it = text_.find(flag);
    if (it == text_.end()) throw ContractError(spec_->name + " does not declare " + flag);
    read_.insert(flag);
    return it->second;
  }

  const CommandSpec* spec_;
  std::map<std::string, std::string> text_;
  std::vector<std::string> positional_;
  mutable std::set<std::string> read_;
};

struct Parser {
  std::unique_ptr<CLI::App> app;
  std::map<std::string, std::unique_ptr<Args>> args;
};

Parser build_parser() {
  Parser p;
  p.app = std::make_unique<CLI::App>("Energy-balanced multimodal training on synthetic data", "ebmc");
  p.app->require_subcommand(1);
  p.app->set_help_all_flag("--help-all", "Help for every subcommand");
  for (const auto& spec : commands()) {
    auto* sub = p.app->add_subcommand(spec.name, spec.help);
    auto& a = *(p.args[spec.name] = std::make_unique<Args>(spec));
    for (const auto& f : spec.flags) {
      CLI::Option* opt = nullptr;
      if (f.kind == Kind::Positional) {
        opt = sub->add_option(f.name, a.positional(), f.help);
      } else {
        opt = sub->add_option(f.name, a.slot(f.name), f.help);
        if (f.kind == Kind::Count) opt->check(CLI::NonNegativeNumber);
      }
      if (f.required) opt->required();
    }
  }
  return p;
}

RunHeader header_for(const std::string& prefix, const std::string& text) {
  const auto hash = git_blob_hash(text);
  return {prefix + hash.substr(0, 12), hash};
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

void write_json_line(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Drops a leading "# ..." header line.
std::string body_of(const std::string& text) {
  if (text.rfind("# ", 0) != 0) return text;
  const auto nl = text.find('\n');
  return nl == std::string::npos ? std::string() : text.substr(nl + 1);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (width.size() <= j) width.push_back(0);
      width[j] = std::max(width[j], r[j].size());
    }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      out << (j ? "  " : "") << std::left << std::setw(static_cast<int>(width[j])) << rows[i][j];
    out << "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << "\n";
    }
  }
}

void print_conditions(std::ostream& out, const std::vector<train::ConditionMetrics>& rows) {
  if (rows.empty()) return;
  std::vector<std::vector<std::string>> table{{"condition"}};
  for (const auto& [name, v] : rows.front().metrics.values) table[0].push_back(name);
  for (const auto& r : rows) {
    std::vector<std::string> line{r.condition};
    for (const auto& [name, v] : rows.front().metrics.values) line.push_back(fmt(r.metrics.get(name)));
    table.push_back(std::move(line));
  }
  print_table(out, table);
}

std::size_t num_classes_for(const fs::path& data_dir, const data::MultimodalBatch& train,
                            const data::MultimodalBatch& test) {
  const auto spec_path = data_dir / "generator.cfg";
  if (fs::exists(spec_path)) return generator_spec_from_config(config::KeyValueConfig::load(spec_path)).num_classes;
  int top = 0;
  for (int y : train.labels) top = std::max(top, y);
  for (int y : test.labels) top = std::max(top, y);
  return static_cast<std::size_t>(top) + 1;
}

struct Dataset {
  data::MultimodalBatch train;
  data::MultimodalBatch test;
  std::size_t num_classes = 0;
};

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.train = data::read_batch(dir / "train");
  d.test = data::read_batch(dir / "test");
  d.num_classes = num_classes_for(dir, d.train, d.test);
  return d;
}

data::MultimodalBatch load_test(const fs::path& dir) { return data::read_batch(dir / "test"); }

// Resolved training config from a config file plus --seed and --disable.
TrainConfig resolve_config(const Args& a) {
  auto kv = config::KeyValueConfig::load(a.text("--config"));
  if (const auto seed = a.count("--seed")) kv.set("train.seed", std::to_string(*seed));
  if (a.has("--disable")) kv.set("train.disable", format_module_list(parse_module_list(a.text("--disable"))));
  auto cfg = TrainConfig::from_config(kv);
  cfg.validate();
  return cfg;
}

std::map<std::string, std::string> checkpoint_metadata(const TrainConfig& cfg, const RunHeader& header,
                                                       const std::string& stage) {
  std::map<std::string, std::string> meta{
      {"run_id", header.run_id}, {"config_hash", header.config_hash}, {"stage", stage}};
  const auto resolved = cfg.to_config();
  for (const auto& [k, v] : resolved.values()) meta["config." + k] = v;
  return meta;
}

struct LoadedRun {
  train::Model model;
  TrainConfig config;
  RunHeader header;
};

LoadedRun load_checkpoint(const fs::path& path) {
  auto loaded = checkpoint::load(path);
  config::KeyValueConfig kv;
  for (const auto& [k, v] : loaded.metadata)
    if (k.rfind("config.", 0) == 0) kv.set(k.substr(7), v);
  const auto meta = [&](const std::string& key) {
    const auto it = loaded.metadata.find(key);
    if (it == loaded.metadata.end()) throw IoError(path.string() + ": checkpoint metadata lacks " + key);
    return it->second;
  };
  return {std::move(loaded.model), TrainConfig::from_config(kv), {meta("run_id"), meta("config_hash")}};
}

int cmd_generate(const Args& a, std::ostream& out) {
  auto spec = a.has("--spec")
                  ? generator_spec_from_config(config::KeyValueConfig::load(a.text("--spec")))
                  : data::GeneratorSpec::default_imbalanced(0);
  if (const auto seed = a.count("--seed")) spec.seed = *seed;
  spec.validate();
  const std::size_t n = a.count("--n").value_or(spec.samples_per_class * spec.num_classes);
  const std::size_t test_n = a.count("--test-n").value_or(4000);
  if (n == 0) throw ContractError("--n must be positive");
  if (test_n == 0) throw ContractError("--test-n must be positive");

  const auto spec_text = generator_spec_to_config(spec).serialize();
  const auto header = header_for("data-", spec_text);
  const fs::path dir = a.text("--out");
  make_dir(dir);

  const auto train = data::generate(spec, n, 0);
  const auto test = data::generate(spec, test_n, 1);
  data::write_batch(train, dir / "train", header.text());
  data::write_batch(test, dir / "test", header.text());
  artifacts::write_text(dir / "generator.cfg", header, spec_text);

  const auto oracle = data::bayes_oracle(spec, test);
  ordered_json j{{"run_id", header.run_id},
                 {"config_hash", header.config_hash},
                 {"split", "test"},
                 {"samples", test_n},
                 {"bayes_accuracy_full", oracle.bayes_accuracy_full},
                 {"bayes_accuracy_per_subset", ordered_json::object()}};
  std::vector<std::string> names;
  for (const auto& m : spec.modalities) names.push_back(m.name);
  for (const auto& subset : data::nonempty_subsets(names)) {
    const auto key = data::subset_key(subset);
    j["bayes_accuracy_per_subset"][key] = oracle.bayes_accuracy_per_subset.at(key);
  }
  write_json_line(dir / "bayes_oracle.json", j);

  std::vector<std::vector<std::string>> table{{"subset", "bayes_accuracy"}};
  for (const auto& [key, acc] : j["bayes_accuracy_per_subset"].items()) table.push_back({key, fmt(acc.get<double>())});
  out << "wrote " << n << " train and " << test_n << " test samples to " << dir.string() << " (" << header.run_id
      << ")\n";
  print_table(out, table);
  return kExitOk;
}

void claim_run_dir(const fs::path& dir, const RunHeader& header) {
  const auto manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) return;
  const auto existing = artifacts::read_header(manifest);
  if (existing.run_id != header.run_id)
    throw ConfigError(dir.string() + " already holds run " + existing.run_id + "; use a fresh output directory");
}

void write_manifest(const fs::path& dir, const RunHeader& header, const Args& a, const std::string& command,
                    const std::vector<std::string>& files) {
  ordered_json j{{"run_id", header.run_id},
                 {"config_hash", header.config_hash},
                 {"command", command},
                 {"config_path", a.text("--config")},
                 {"data_dir", a.text("--data")},
                 {"generator_spec", (fs::path(a.text("--data")) / "generator.cfg").string()},
                 {"output_dir", dir.string()},
                 {"files", files}};
  write_json_line(dir / "manifest.json", j);
}

int cmd_train(const Args& a, std::ostream& out, std::ostream& err) {
  const auto cfg = resolve_config(a);
  const auto resolved = cfg.to_config().serialize();
  const auto header = header_for("run-", resolved);
  const fs::path dir = a.text("--out");
  const auto data = load_dataset(a.text("--data"));
  make_dir(dir);
  claim_run_dir(dir, header);

  artifacts::write_text(dir / "config.resolved", header, resolved);
  write_manifest(dir, header, a, "train",
                 {"config.resolved", "manifest.json", "stage1.ckpt", "final.ckpt", "runlog.jsonl", "metrics.csv",
                  "energy.csv", "trust.csv", "loss.csv"});

  auto model = train::Model::for_batch(data.train, data.num_classes, cfg.dims, derive_seed(cfg.seed, "model/init"));
  model.check_compatible(data.test);
  train::RunLog log;
  train::TrainHooks hooks;
  hooks.on_epoch = [&](const train::EpochRecord& r) {
    out << "stage " << static_cast<int>(r.stage) << " epoch " << r.epoch << " loss " << fmt(r.losses.l_total)
        << " train_acc " << fmt(r.train_accuracy) << "\n";
  };
  try {
    train::train_stage1(model, cfg, data.train, log, hooks);
    checkpoint::save(model, checkpoint_metadata(cfg, header, "1"), dir / "stage1.ckpt");
    train::train_stage2(model, cfg, data.train, log, hooks);
  } catch (const train::TrainingAbort& e) {
    artifacts::write_runlog_jsonl(dir / "runlog.jsonl", header, log);
    err << "training aborted: " << e.what() << " (stage " << static_cast<int>(e.stage) << ", epoch " << e.epoch
        << ", batch " << e.batch << ", batch seed " << e.batch_seed << ", energies";
    for (double v : e.energies) err << " " << csv::format_double(v);
    err << ")\n";
    return kExitRuntime;
  }
  checkpoint::save(model, checkpoint_metadata(cfg, header, "2"), dir / "final.ckpt");

  const std::vector<train::ConditionMetrics> rows{train::ConditionMetrics{"full", train::evaluate(model, cfg, data.test)}};
  artifacts::write_metrics_csv(dir / "metrics.csv", header, cfg.seed, rows);
  artifacts::write_runlog_jsonl(dir / "runlog.jsonl", header, log);
  artifacts::write_energy_csv(dir / "energy.csv", header, log);
  artifacts::write_trust_csv(dir / "trust.csv", header, log);
  artifacts::write_loss_csv(dir / "loss.csv", header, log);
  out << "run " << header.run_id << " written to " << dir.string() << "\n";
  print_conditions(out, rows);
  return kExitOk;
}

data::MultimodalBatch apply_condition(const data::MultimodalBatch& test, const std::string& condition,
                                      std::uint64_t seed) {
  if (condition == "full") return test;
  if (condition.rfind("p=", 0) == 0) return train::apply_dropout_condition(test, csv::parse_double(condition.substr(2)), seed);
  std::vector<std::string> keep;
  std::string name;
  std::istringstream in(condition);
  while (std::getline(in, name, '+')) keep.push_back(name);
  for (const auto& m : keep) test.index_of(m);
  return data::apply_modality_missing(test, keep);
}

int cmd_eval(const Args& a, std::ostream& out) {
  const auto run = load_checkpoint(a.text("--checkpoint"));
  const auto test = load_test(a.text("--data"));
  run.model.check_compatible(test);
  std::string condition = a.has("--condition") ? a.text("--condition") : "full";
  if (condition.rfind("p=", 0) == 0) condition = train::dropout_condition(csv::parse_double(condition.substr(2)));
  const std::uint64_t seed = a.count("--seed").value_or(run.config.seed);
  const auto batch = apply_condition(test, condition, seed);
  const std::vector<train::ConditionMetrics> rows{train::ConditionMetrics{condition, train::evaluate(run.model, run.config, batch)}};
  const fs::path dir = a.text("--out");
  make_dir(dir);
  artifacts::write_metrics_csv(dir / "metrics.csv", run.header, seed, rows);
  print_conditions(out, rows);
  return kExitOk;
}

int cmd_ablate(const Args& a, std::ostream& out) {
  auto kv = config::KeyValueConfig::load(a.text("--config"));
  if (const auto seed = a.count("--seed")) kv.set("train.seed", std::to_string(*seed));
  auto cfg = TrainConfig::from_config(kv);
  cfg.validate();
  const auto disable = a.has("--disable") ? parse_module_list(a.text("--disable")) : std::set<Module>{};
  const auto resolved = cfg.to_config().serialize();
  const auto header = header_for("ablate-", resolved);
  const auto data = load_dataset(a.text("--data"));
  const fs::path dir = a.text("--out");
  make_dir(dir);
  claim_run_dir(dir, header);
  const auto rows = train::run_ablation(cfg, data.train, data.test, data.num_classes, disable);
  artifacts::write_text(dir / "config.resolved", header, resolved);
  write_manifest(dir, header, a, "ablate", {"config.resolved", "manifest.json", "metrics.csv"});
  artifacts::write_metrics_csv(dir / "metrics.csv", header, cfg.seed, rows);
  print_conditions(out, rows);
  return kExitOk;
}

int cmd_robust(const Args& a, std::ostream& out) {
  const auto protocol = train::parse_protocol(a.text("--protocol"));
  const auto run = load_checkpoint(a.text("--checkpoint"));
  const auto test = load_test(a.text("--data"));
  run.model.check_compatible(test);
  const std::uint64_t seed = a.count("--seed").value_or(run.config.seed);
  const auto rows = train::run_robustness(run.model, run.config, test, protocol, seed);
  const fs::path dir = a.text("--out");
  make_dir(dir);
  artifacts::write_metrics_csv(dir / "metrics.csv", run.header, seed, rows);
  out << "protocol " << train::to_string(protocol) << "\n";
  print_conditions(out, rows);
  return kExitOk;
}

struct Stats {
  double mean = 0.0;
  double stddev = 0.0;
};

Stats mean_std(const std::vector<double>& v) {
  Stats s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct ReportRun {
  fs::path dir;
  RunHeader header;
  config::KeyValueConfig config;
};

ReportRun open_run(const fs::path& dir) {
  const auto text = read_file(dir / "config.resolved");
  const auto header = artifacts::read_header(dir / "config.resolved");
  const auto hash = git_blob_hash(body_of(text));
  if (hash != header.config_hash)
    throw IoError((dir / "config.resolved").string() + ": config hash " + hash + " does not match header " +
                  header.config_hash);
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (ext != ".csv" && ext != ".jsonl" && ext != ".json") continue;
    const auto h = artifacts::read_header(entry.path());
    if (h.run_id != header.run_id || h.config_hash != header.config_hash)
      throw IoError(entry.path().string() + ": header " + h.text() + " does not match " + header.text());
  }
  return {dir, header, config::KeyValueConfig::parse(body_of(text), (dir / "config.resolved").string())};
}

void check_homogeneous(const std::vector<ReportRun>& runs) {
  const auto& ref = runs.front();
  std::vector<std::string> diffs;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    std::set<std::string> keys;
    for (const auto& [k, v] : ref.config.values()) keys.insert(k);
    for (const auto& [k, v] : runs[r].config.values()) keys.insert(k);
    for (const auto& k : keys) {
      if (k == "train.seed") continue;
      const std::string a = ref.config.has(k) ? ref.config.get(k) : "<unset>";
      const std::string b = runs[r].config.has(k) ? runs[r].config.get(k) : "<unset>";
      if (a != b)
        diffs.push_back("  " + k + ": " + a + " (" + ref.dir.string() + ") vs " + b + " (" + runs[r].dir.string() +
                        ")");
    }
  }
  if (diffs.empty()) return;
  std::string msg = "runs have different configs:";
  for (const auto& d : diffs) msg += "\n" + d;
  throw ConfigError(msg);
}

using MetricKey = std::pair<std::string, std::string>;

std::map<MetricKey, double> read_metrics(const fs::path& path) {
  const auto table = csv::read(path);
  const auto c = table.column("condition"), m = table.column("metric"), v = table.column("value");
  std::map<MetricKey, double> out;
  for (const auto& row : table.rows) out[{row[c], row[m]}] = csv::parse_double(row[v]);
  return out;
}

// Mean and std of every non-key column across runs, row by row.
void aggregate_trajectory(const std::vector<ReportRun>& runs, const std::string& file,
                          const std::vector<std::string>& keys, const fs::path& out_path, const RunHeader& header) {
  std::vector<csv::Table> tables;
  for (const auto& r : runs) {
    if (!fs::exists(r.dir / file)) return;
    tables.push_back(csv::read(r.dir / file));
  }
  const auto& ref = tables.front();
  std::vector<std::size_t> key_cols, value_cols;
  for (std::size_t j = 0; j < ref.header.size(); ++j)
    (std::find(keys.begin(), keys.end(), ref.header[j]) != keys.end() ? key_cols : value_cols).push_back(j);
  for (std::size_t t = 1; t < tables.size(); ++t) {
    if (tables[t].header != ref.header || tables[t].rows.size() != ref.rows.size())
      throw ConfigError(file + " in " + runs[t].dir.string() + " does not line up with " + runs[0].dir.string());
    for (std::size_t i = 0; i < ref.rows.size(); ++i)
      for (auto j : key_cols)
        if (tables[t].rows[i][j] != ref.rows[i][j])
          throw ConfigError(file + " in " + runs[t].dir.string() + " does not line up with " + runs[0].dir.string());
  }
  std::ostringstream text;
  for (std::size_t n = 0; n < key_cols.size(); ++n) text << (n ? "," : "") << ref.header[key_cols[n]];
  for (auto j : value_cols) text << "," << ref.header[j] << "_mean," << ref.header[j] << "_std";
  text << "\n";
  for (std::size_t i = 0; i < ref.rows.size(); ++i) {
    for (std::size_t n = 0; n < key_cols.size(); ++n) text << (n ? "," : "") << ref.rows[i][key_cols[n]];
    for (auto j : value_cols) {
      std::vector<double> v;
      for (const auto& t : tables) v.push_back(csv::parse_double(t.rows[i][j]));
      const auto s = mean_std(v);
      text << "," << csv::format_double(s.mean) << "," << csv::format_double(s.stddev);
    }
    text << "\n";
  }
  artifacts::write_text(out_path, header, text.str());
}

int cmd_report(const Args& a, std::ostream& out) {
  std::vector<ReportRun> runs;
  for (const auto& d : a.runs()) runs.push_back(open_run(d));
  check_homogeneous(runs);

  std::vector<std::map<MetricKey, double>> metrics;
  for (const auto& r : runs) metrics.push_back(read_metrics(r.dir / "metrics.csv"));
  for (std::size_t r = 1; r < runs.size(); ++r) {
    std::set<MetricKey> a0, ar;
    for (const auto& [k, v] : metrics[0]) a0.insert(k);
    for (const auto& [k, v] : metrics[r]) ar.insert(k);
    if (a0 != ar)
      throw ConfigError("metric sets differ between " + runs[0].dir.string() + " and " + runs[r].dir.string());
  }

  auto shared = runs.front().config;
  shared.set("train.seed", "*");
  std::string ids;
  for (const auto& r : runs) ids += r.header.run_id + "\n";
  const RunHeader header{"report-" + git_blob_hash(ids).substr(0, 12),
                         git_blob_hash(shared.serialize())};

  const fs::path dir = a.text("--out");
  make_dir(dir);
  std::ostringstream summary;
  summary << "condition,metric,n,mean,std\n";
  std::vector<std::vector<std::string>> table{{"condition", "metric", "n", "mean", "std"}};
  for (const auto& [key, v0] : metrics.front()) {
    std::vector<double> v;
    for (const auto& m : metrics) v.push_back(m.at(key));
    const auto s = mean_std(v);
    summary << key.first << "," << key.second << "," << v.size() << "," << csv::format_double(s.mean) << ","
            << csv::format_double(s.stddev) << "\n";
    table.push_back({key.first, key.second, std::to_string(v.size()), fmt(s.mean), fmt(s.stddev)});
  }
  artifacts::write_text(dir / "summary.csv", header, summary.str());
  aggregate_trajectory(runs, "loss.csv", {"epoch", "stage"}, dir / "loss_trajectory.csv", header);
  aggregate_trajectory(runs, "energy.csv", {"epoch", "stage", "modality"}, dir / "energy_trajectory.csv", header);
  aggregate_trajectory(runs, "trust.csv", {"epoch", "modality"}, dir / "trust_trajectory.csv", header);
  out << runs.size() << " runs aggregated into " << dir.string() << "\n";
  print_table(out, table);
  return kExitOk;
}

int dispatch(const std::string& name, const Args& a, std::ostream& out, std::ostream& err) {
  if (name == "generate") return cmd_generate(a, out);
  if (name == "train") return cmd_train(a, out, err);
  if (name == "eval") return cmd_eval(a, out);
  if (name == "ablate") return cmd_ablate(a, out);
  if (name == "robust") return cmd_robust(a, out);
  if (name == "report") return cmd_report(a, out);
  throw ContractError("unknown subcommand: " + name);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::set<std::string>* read_flags) {
  auto parser = build_parser();
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    parser.app->parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = parser.app->get_subcommands();
    out << (subs.empty() ? parser.app->help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << parser.app->help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\nrun 'ebmc --help' for usage\n";
    return kExitUsage;
  }
  const auto name = parser.app->get_subcommands().front()->get_name();
  const auto& a = *parser.args.at(name);
  struct Record {
    const Args& a;
    std::set<std::string>* sink;
    ~Record() {
      if (sink) *sink = a.read();
    }
  } record{a, read_flags};
  try {
    return dispatch(name, a, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

std::string help_text(const std::string& subcommand) {
  auto parser = build_parser();
  if (subcommand.empty()) return parser.app->help("", CLI::AppFormatMode::All);
  return parser.app->get_subcommand(subcommand)->help();
}

std::vector<std::string> declared_flags(const std::string& subcommand) {
  auto parser = build_parser();
  std::vector<std::string> out;
  for (const auto* opt : parser.app->get_subcommand(subcommand)->get_options()) {
    const auto name = opt->get_name();
    if (name != "--help" && name != "--help-all") out.push_back(name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> subcommands() {
  std::vector<std::string> out;
  for (const auto& c : commands()) out.push_back(c.name);
  return out;
}

}  // namespace ebmc::cli
