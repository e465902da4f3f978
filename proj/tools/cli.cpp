#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ptext/checkpoint.hpp"
#include "ptext/corpus.hpp"
#include "ptext/error.hpp"
#include "ptext/evalkit.hpp"
#include "ptext/features.hpp"
#include "ptext/rng.hpp"
#include "ptext/trainer.hpp"

#ifndef PTEXT_VERSION
#define PTEXT_VERSION "0.0.0"
#endif

namespace ptext::cli {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;

  // collect
  std::string raw_path;
  std::string synonyms_path;
  std::string task;
  std::optional<std::size_t> per_class;
  std::string held_out_path;

  // train
  std::string corpus_path;
  std::string report_path;

  // eval / transfer / zero-shot / sweep
  std::string bank_path;
  std::string features_path;
  std::string eval_corpus_path;
  std::string mode = "ensemble";
  std::string template_text = std::string(kZeroShotTemplate);
  std::vector<std::size_t> lengths;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collects what a command read and wrote, then emits <out>.manifest.json.
class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)) {}

  std::string read_input(const std::string& role, const std::string& path) {
    std::string bytes = read_file_bytes(path);
    inputs_[role] = {{"path", path}, {"fnv1a64", hex64(fnv1a64(bytes))}};
    return bytes;
  }

  void set_config(const TrainConfig& cfg) { config_ = ordered_json::parse(to_json_string(cfg)); }
  void set_seed(const std::string& role, std::uint64_t seed) { seeds_[role] = seed; }
  void set_option(const std::string& key, ordered_json value) { options_[key] = std::move(value); }

  void write_output(const std::string& path, std::string_view bytes) {
    write_file_atomic(path, bytes);
    outputs_.push_back({{"path", path}, {"fnv1a64", hex64(fnv1a64(bytes))}});
  }

  void finish(const std::string& out_path) const {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    ordered_json m;
    m["tool"] = "ptext";
    m["version"] = PTEXT_VERSION;
    m["command"] = command_;
    m["config"] = config_;
    m["seeds"] = seeds_.is_null() ? ordered_json::object() : seeds_;
    m["options"] = options_.is_null() ? ordered_json::object() : options_;
    m["inputs"] = inputs_.is_null() ? ordered_json::object() : inputs_;
    m["outputs"] = outputs_;
    m["timestamp"] = utc_timestamp();
    m["wall_seconds"] = wall;
    write_file_atomic(out_path + ".manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
  ordered_json config_;
  ordered_json seeds_;
  ordered_json options_;
  ordered_json inputs_;
  ordered_json outputs_ = ordered_json::array();
};

TrainConfig load_config(const Options& o, Manifest& manifest) {
  TrainConfig cfg;
  if (!o.config_path.empty()) cfg = parse_train_config(manifest.read_input("config", o.config_path));
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  manifest.set_config(cfg);
  manifest.set_seed("config", cfg.seed);
  return cfg;
}

LabeledCorpus load_corpus(Manifest& manifest, const std::string& role, const std::string& path) {
  std::istringstream in(manifest.read_input(role, path));
  return read_corpus_jsonl(in);
}

std::string corpus_bytes(const LabeledCorpus& corpus) {
  std::ostringstream out;
  write_corpus_jsonl(out, corpus);
  return out.str();
}

std::string default_report_path(const std::string& out_path) {
  fs::path p(out_path);
  p.replace_extension(".report.json");
  return p.string();
}

struct LoadedBank {
  LoadedCheckpoint checkpoint;
  EncoderWeights encoder;
};

LoadedBank load_bank(Manifest& manifest, const std::string& path) {
  LoadedCheckpoint ck = deserialize_checkpoint(manifest.read_input("bank", path));
  manifest.set_seed("encoder", ck.bank.seed);
  EncoderWeights enc = init_encoder(ck.bank.seed, ck.bank.dim(), ck.bucket_count);
  return {std::move(ck), std::move(enc)};
}

EvalOptions eval_options(const Options& o, Manifest& manifest) {
  EvalOptions opts;
  if (!o.config_path.empty()) {
    opts.tau_s = parse_train_config(manifest.read_input("config", o.config_path)).tau_s;
  }
  opts.zero_shot_template = o.template_text;
  return opts;
}

std::string format_value(double v) {
  std::ostringstream s;
  s.precision(4);
  s << std::fixed << v;
  return s.str();
}

int cmd_collect(const Options& o, std::ostream& out) {
  Manifest manifest("collect");
  TrainConfig cfg = load_config(o, manifest);
  const TaskKind task = !o.task.empty() ? task_kind_from_string(o.task) : cfg.task.value_or(TaskKind::SingleLabel);
  const std::size_t per_class = o.per_class.value_or(cfg.captions_per_class);
  manifest.set_option("task", to_string(task));
  manifest.set_option("per_class", per_class);

  std::istringstream raw_in(manifest.read_input("raw", o.raw_path));
  const std::vector<std::string> raw = read_raw_captions(raw_in);
  const SynonymDict dict = parse_synonym_json(manifest.read_input("synonyms", o.synonyms_path));
  LabeledCorpus corpus = collect_captions(raw, dict, task, per_class);

  if (o.held_out_path.empty()) {
    manifest.write_output(o.out_path, corpus_bytes(corpus));
    out << "collect: " << corpus.captions.size() << " captions, " << corpus.class_names.size() << " classes -> "
        << o.out_path << "\n";
  } else {
    manifest.set_option("held_out_fraction", cfg.held_out_fraction);
    auto [train_half, held_half] = split_corpus(corpus, cfg.held_out_fraction, cfg.seed);
    const std::string train_bytes = corpus_bytes(train_half);
    const std::string held_bytes = corpus_bytes(held_half);
    manifest.write_output(o.out_path, train_bytes);
    manifest.write_output(o.held_out_path, held_bytes);
    out << "collect: " << train_half.captions.size() << " train + " << held_half.captions.size()
        << " held-out captions, " << corpus.class_names.size() << " classes -> " << o.out_path << ", "
        << o.held_out_path << "\n";
  }
  manifest.finish(o.out_path);
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  Manifest manifest("train");
  TrainConfig cfg = load_config(o, manifest);
  const LabeledCorpus corpus = load_corpus(manifest, "corpus", o.corpus_path);
  const EncoderWeights encoder = init_encoder(cfg.seed, cfg.dim, cfg.bucket_count);
  manifest.set_seed("encoder", cfg.seed);

  const TrainReport report = train(cfg, corpus, encoder);
  const std::string report_path = o.report_path.empty() ? default_report_path(o.out_path) : o.report_path;
  const std::string bank_bytes = serialize_checkpoint(report.bank, cfg.bucket_count);
  const std::string report_bytes = report_to_json_string(report);
  manifest.write_output(o.out_path, bank_bytes);
  manifest.write_output(report_path, report_bytes);
  manifest.finish(o.out_path);

  const double last = report.epochs.empty() ? 0.0 : report.epochs.back().total;
  out << "train: " << report.epochs.size() << " epochs, " << report.steps << " steps, final loss "
      << format_value(last) << ", " << format_value(report.wall_seconds) << " s -> " << o.out_path << "\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  Manifest manifest("eval");
  const EvalMode mode = eval_mode_from_string(o.mode);
  manifest.set_option("mode", to_string(mode));
  LoadedBank lb = load_bank(manifest, o.bank_path);
  const EvalOptions opts = eval_options(o, manifest);
  manifest.set_option("tau_s", opts.tau_s);
  if (mode == EvalMode::ZeroShot) manifest.set_option("template", opts.zero_shot_template);

  EvalResult result;
  if (!o.features_path.empty()) {
    const TaskKind task = o.task.empty() ? TaskKind::SingleLabel : task_kind_from_string(o.task);
    manifest.set_option("task", to_string(task));
    std::istringstream in(manifest.read_input("features", o.features_path));
    const FeatureFile features = read_feature_file(in, lb.checkpoint.bank.dim(), lb.checkpoint.bank.num_classes());
    result = evaluate(lb.encoder, lb.checkpoint.bank, features, task, mode, opts);
  } else {
    const LabeledCorpus corpus = load_corpus(manifest, "corpus", o.corpus_path);
    result = evaluate(lb.encoder, lb.checkpoint.bank, corpus, mode, opts);
  }
  manifest.write_output(o.out_path, to_json_string(result));
  manifest.finish(o.out_path);
  out << "eval (" << to_string(mode) << "): " << to_string(result.metric) << " " << format_value(result.value)
      << " over " << result.samples << " samples -> " << o.out_path << "\n";
  return 0;
}

int cmd_transfer(const Options& o, std::ostream& out) {
  Manifest manifest("transfer");
  const EvalMode mode = eval_mode_from_string(o.mode);
  manifest.set_option("mode", to_string(mode));
  LoadedBank lb = load_bank(manifest, o.bank_path);
  const EvalOptions opts = eval_options(o, manifest);
  manifest.set_option("tau_s", opts.tau_s);
  const LabeledCorpus target = load_corpus(manifest, "corpus", o.corpus_path);

  const TransferResult tx = transfer_eval(lb.encoder, lb.checkpoint.bank, target, mode, opts);
  ordered_json j = ordered_json::parse(to_json_string(tx.result));
  ordered_json unseen = ordered_json::array();
  for (std::size_t c : tx.unseen_classes) unseen.push_back(target.class_names[c]);
  j["unseen_classes"] = unseen;
  j["unseen_value"] = tx.unseen_classes.empty() ? ordered_json(nullptr) : ordered_json(tx.unseen_value);
  manifest.write_output(o.out_path, j.dump(2) + "\n");
  manifest.finish(o.out_path);
  out << "transfer (" << to_string(mode) << "): " << to_string(tx.result.metric) << " "
      << format_value(tx.result.value) << ", unseen classes " << tx.unseen_classes.size() << " at "
      << format_value(tx.unseen_value) << " -> " << o.out_path << "\n";
  return 0;
}

int cmd_zero_shot(const Options& o, std::ostream& out) {
  Manifest manifest("zero-shot");
  TrainConfig cfg = load_config(o, manifest);
  manifest.set_option("template", o.template_text);
  const LabeledCorpus corpus = load_corpus(manifest, "corpus", o.corpus_path);
  const EncoderWeights encoder = init_encoder(cfg.seed, cfg.dim, cfg.bucket_count);
  manifest.set_seed("encoder", cfg.seed);

  // Zero-shot needs no prompt rows; the bank only carries the class list.
  PromptBank bank = with_classes(init_prompts(cfg, corpus.class_names), corpus.class_names, cfg.bucket_count);
  EvalOptions opts;
  opts.tau_s = cfg.tau_s;
  opts.zero_shot_template = o.template_text;
  const EvalResult result = evaluate(encoder, bank, corpus, EvalMode::ZeroShot, opts);
  manifest.write_output(o.out_path, to_json_string(result));
  manifest.finish(o.out_path);
  out << "zero-shot: " << to_string(result.metric) << " " << format_value(result.value) << " over "
      << result.samples << " samples -> " << o.out_path << "\n";
  return 0;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  Manifest manifest("sweep");
  TrainConfig cfg = load_config(o, manifest);
  const EvalMode mode = eval_mode_from_string(o.mode);
  manifest.set_option("mode", to_string(mode));
  manifest.set_option("lengths", o.lengths);
  manifest.set_seed("encoder", cfg.seed);
  const LabeledCorpus train_set = load_corpus(manifest, "corpus", o.corpus_path);
  const LabeledCorpus eval_set = load_corpus(manifest, "eval_corpus", o.eval_corpus_path);

  EvalOptions opts;
  opts.tau_s = cfg.tau_s;
  opts.zero_shot_template = o.template_text;
  const SweepTable table = prompt_length_sweep(cfg, train_set, eval_set, o.lengths, mode, opts);
  manifest.write_output(o.out_path, to_json_string(table));
  manifest.finish(o.out_path);

  out << "sweep (" << to_string(mode) << "): zero-shot " << format_value(table.zero_shot.value);
  for (const auto& row : table.rows) out << ", N=" << row.prompt_length << " " << format_value(row.result.value);
  out << " -> " << o.out_path << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Text-only prompt tuning for a frozen caption encoder", "ptext"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PTEXT_VERSION);

  const std::string mode_help = "Scoring mode: coarse, fine, ensemble or zero_shot";
  const auto add_common = [&](CLI::App* sub, bool needs_config) {
    sub->add_option("--config", o.config_path, "Training config JSON")->check(CLI::ExistingFile);
    if (needs_config) sub->add_option("--seed", o.seed, "Overrides the config seed");
    sub->add_option("--out", o.out_path, "Primary output path")->required();
  };

  CLI::App* collect = app.add_subcommand("collect", "Build a labeled caption corpus from raw captions");
  add_common(collect, true);
  collect->add_option("raw", o.raw_path, "Raw captions, one per line")->required();
  collect->add_option("synonyms", o.synonyms_path, "Synonym dictionary JSON")->required();
  collect->add_option("--task", o.task, "single or multi (overrides the config)");
  collect->add_option("--per-class", o.per_class, "Captions per class (overrides the config)");
  collect->add_option("--held-out", o.held_out_path, "Also split off a held-out corpus to this path");

  CLI::App* train_cmd = app.add_subcommand("train", "Tune coarse and fine prompts on a caption corpus");
  add_common(train_cmd, true);
  train_cmd->add_option("--corpus", o.corpus_path, "Corpus JSONL")->required();
  train_cmd->add_option("--report", o.report_path, "Training report path (default: <out>.report.json)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a prompt bank");
  add_common(eval_cmd, false);
  eval_cmd->add_option("--bank", o.bank_path, "Prompt bank checkpoint")->required();
  auto* corpus_opt = eval_cmd->add_option("--corpus", o.corpus_path, "Held-out corpus JSONL");
  auto* features_opt = eval_cmd->add_option("--features", o.features_path, "Feature file JSONL");
  corpus_opt->excludes(features_opt);
  eval_cmd->add_option("--task", o.task, "Task of the feature file: single or multi");
  eval_cmd->add_option("--mode", o.mode, mode_help);
  eval_cmd->add_option("--template", o.template_text, "Template for zero_shot mode");

  CLI::App* transfer_cmd = app.add_subcommand("transfer", "Apply a bank to a different class set");
  add_common(transfer_cmd, false);
  transfer_cmd->add_option("--bank", o.bank_path, "Source prompt bank checkpoint")->required();
  transfer_cmd->add_option("--corpus", o.corpus_path, "Target corpus JSONL")->required();
  transfer_cmd->add_option("--mode", o.mode, mode_help);

  CLI::App* zero_cmd = app.add_subcommand("zero-shot", "Evaluate a hand-written template without tuning");
  add_common(zero_cmd, true);
  zero_cmd->add_option("--corpus", o.corpus_path, "Corpus JSONL")->required();
  zero_cmd->add_option("--template", o.template_text, "Template containing [CLASS]");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate one bank per prompt length");
  add_common(sweep_cmd, true);
  sweep_cmd->add_option("--corpus", o.corpus_path, "Training corpus JSONL")->required();
  sweep_cmd->add_option("--eval-corpus", o.eval_corpus_path, "Evaluation corpus JSONL")->required();
  sweep_cmd->add_option("--lengths", o.lengths, "Prompt lengths, comma separated")
      ->required()
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--mode", o.mode, mode_help);
  sweep_cmd->add_option("--template", o.template_text, "Zero-shot baseline template");

  std::vector<const char*> argv{"ptext"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (eval_cmd->parsed() && o.corpus_path.empty() && o.features_path.empty()) {
      err << "eval: one of --corpus or --features is required\n";
      return 1;
    }
    if (collect->parsed()) return cmd_collect(o, out);
    if (train_cmd->parsed()) return cmd_train(o, out);
    if (eval_cmd->parsed()) return cmd_eval(o, out);
    if (transfer_cmd->parsed()) return cmd_transfer(o, out);
    if (zero_cmd->parsed()) return cmd_zero_shot(o, out);
    if (sweep_cmd->parsed()) return cmd_sweep(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace ptext::cli
