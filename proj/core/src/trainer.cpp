#include "ptext/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ptext/error.hpp"
#include "ptext/rng.hpp"

namespace ptext {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr double kPromptInitStd = 0.02;

Mat gaussian_rows(std::uint64_t seed, const char* tag, std::size_t rows, std::size_t cols, double stddev) {
  CounterRng rng(seed, tag);
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = stddev * rng.next_normal();
  }
  return m;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t count) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed, "trainer.shuffle", epoch);
  for (std::size_t i = count; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

bool all_finite(const PromptLoss& loss) {
  return std::isfinite(loss.value) && loss.grad_coarse.allFinite() && loss.grad_fine.allFinite();
}

void apply_update(const TrainConfig& cfg, PromptBank& bank, const PromptLoss& loss, AdamState& coarse_state,
                  AdamState& fine_state, std::size_t step) {
  if (cfg.optimizer == OptimizerKind::Adam) {
    const AdamParams hp{cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon};
    adam_update(bank.coarse, loss.grad_coarse, coarse_state, hp, step);
    adam_update(bank.fine, loss.grad_fine, fine_state, hp, step);
  } else {
    sgd_update(bank.coarse, loss.grad_coarse, cfg.lr);
    sgd_update(bank.fine, loss.grad_fine, cfg.lr);
  }
}

template <typename T>
T get_field(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidConfig, "config key \"" + key + "\" has the wrong type");
  }
}

std::size_t get_count(const json& value, const std::string& key) {
  // The parser stores every non-negative integer literal as unsigned.
  if (!value.is_number_unsigned()) {
    throw Error(ErrorCode::InvalidConfig, "config key \"" + key + "\" must be a non-negative integer");
  }
  return value.get<std::size_t>();
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (prompt_length < 1) fail("N must be at least 1");
  if (dim < 2) fail("d must be at least 2");
  if (bucket_count < dim) fail("bucket_count must be at least d");
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(tau_s > 0.0)) fail("tau_s must be positive");
  if (captions_per_class < 1) fail("L must be at least 1");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon must be positive");
  if (!(margin > 0.0)) fail("margin must be positive");
  if (!(held_out_fraction > 0.0 && held_out_fraction < 1.0)) fail("held_out_fraction must lie in (0, 1)");
}

TrainConfig parse_train_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");

  TrainConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    if (key == "N") cfg.prompt_length = get_count(value, key);
    else if (key == "d") cfg.dim = get_count(value, key);
    else if (key == "bucket_count") cfg.bucket_count = get_count(value, key);
    else if (key == "tau") cfg.tau = get_field<double>(value, key);
    else if (key == "tau_s") cfg.tau_s = get_field<double>(value, key);
    else if (key == "L") cfg.captions_per_class = get_count(value, key);
    else if (key == "lr") cfg.lr = get_field<double>(value, key);
    else if (key == "epochs") cfg.epochs = get_count(value, key);
    else if (key == "batch_size") cfg.batch_size = get_count(value, key);
    else if (key == "seed") cfg.seed = get_count(value, key);
    else if (key == "task") {
      try {
        cfg.task = task_kind_from_string(get_field<std::string>(value, key));
      } catch (const Error& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
      }
    } else if (key == "optimizer") {
      const auto name = get_field<std::string>(value, key);
      if (name == "adam") cfg.optimizer = OptimizerKind::Adam;
      else if (name == "sgd") cfg.optimizer = OptimizerKind::Sgd;
      else throw Error(ErrorCode::InvalidConfig, "optimizer must be \"adam\" or \"sgd\"");
    } else if (key == "beta1") cfg.beta1 = get_field<double>(value, key);
    else if (key == "beta2") cfg.beta2 = get_field<double>(value, key);
    else if (key == "epsilon") cfg.epsilon = get_field<double>(value, key);
    else if (key == "margin") cfg.margin = get_field<double>(value, key);
    else if (key == "held_out_fraction") cfg.held_out_fraction = get_field<double>(value, key);
    else throw Error(ErrorCode::InvalidConfig, "unknown config key \"" + key + "\"");
  }
  cfg.validate();
  return cfg;
}

std::string to_json_string(const TrainConfig& cfg) {
  ordered_json doc;
  doc["N"] = cfg.prompt_length;
  doc["d"] = cfg.dim;
  doc["bucket_count"] = cfg.bucket_count;
  doc["tau"] = cfg.tau;
  doc["tau_s"] = cfg.tau_s;
  doc["L"] = cfg.captions_per_class;
  doc["lr"] = cfg.lr;
  doc["epochs"] = cfg.epochs;
  doc["batch_size"] = cfg.batch_size;
  doc["seed"] = cfg.seed;
  if (cfg.task) doc["task"] = to_string(*cfg.task);
  doc["optimizer"] = cfg.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
  doc["beta1"] = cfg.beta1;
  doc["beta2"] = cfg.beta2;
  doc["epsilon"] = cfg.epsilon;
  doc["margin"] = cfg.margin;
  doc["held_out_fraction"] = cfg.held_out_fraction;
  return doc.dump(2);
}

PromptBank init_prompts(const TrainConfig& cfg, const std::vector<std::string>& class_names) {
  cfg.validate();
  PromptBank bank;
  bank.coarse = gaussian_rows(cfg.seed, "prompt.coarse", cfg.prompt_length, cfg.dim, kPromptInitStd);
  bank.fine = gaussian_rows(cfg.seed, "prompt.fine", cfg.prompt_length, cfg.dim, kPromptInitStd);
  bank.seed = cfg.seed;
  bank.class_names = class_names;
  for (const auto& name : class_names) {
    bank.class_tokens.push_back(tokenize(name, static_cast<std::uint32_t>(cfg.bucket_count)));
  }
  return bank;
}

void adam_update(Mat& params, const Mat& grads, AdamState& state, const AdamParams& hp, std::size_t step) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient shape does not match the parameters");
  }
  if (step < 1) throw Error(ErrorCode::InvalidInput, "Adam step numbers start at 1");
  if (state.m.size() == 0) state.m = Mat::Zero(params.rows(), params.cols());
  if (state.v.size() == 0) state.v = Mat::Zero(params.rows(), params.cols());
  if (state.m.rows() != params.rows() || state.m.cols() != params.cols() || state.v.rows() != params.rows() ||
      state.v.cols() != params.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state shape does not match the parameters");
  }
  state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * grads;
  state.v = hp.beta2 * state.v + (1.0 - hp.beta2) * grads.cwiseProduct(grads);
  const double m_corr = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
  const double v_corr = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
  params.array() -= hp.lr * (state.m.array() / m_corr) / ((state.v.array() / v_corr).sqrt() + hp.epsilon);
}

void sgd_update(Mat& params, const Mat& grads, double lr) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient shape does not match the parameters");
  }
  params -= lr * grads;
}

TrainReport train(const TrainConfig& cfg, const LabeledCorpus& corpus, const EncoderWeights& encoder,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (corpus.captions.empty()) throw Error(ErrorCode::InvalidInput, "training corpus is empty");
  if (cfg.task && *cfg.task != corpus.task) {
    throw Error(ErrorCode::InvalidConfig, std::string("config task \"") + to_string(*cfg.task) +
                                              "\" does not match corpus task \"" + to_string(corpus.task) + "\"");
  }
  if (encoder.dim() != cfg.dim || encoder.bucket_count() != cfg.bucket_count) {
    throw Error(ErrorCode::DimensionMismatch, "encoder shape does not match the config");
  }
  validate_labels(corpus);
  if (corpus.task == TaskKind::MultiLabel) {
    for (const auto& cap : corpus.captions) {
      if (cap.positives().size() == corpus.num_classes()) {
        throw Error(ErrorCode::DegenerateLabels, "caption \"" + cap.text + "\" is positive for every class");
      }
    }
  }

  const auto started = std::chrono::steady_clock::now();
  TrainReport report;
  report.encoder_checksum_before = encoder.checksum();
  report.bank = init_prompts(cfg, corpus.class_names);

  const auto features = encode_captions(encoder, corpus);
  LossOptions options;
  options.task = corpus.task;
  options.tau = cfg.tau;
  options.tau_s = cfg.tau_s;
  options.margin = cfg.margin;

  AdamState coarse_state, fine_state;
  std::vector<CaptionFeatures> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(cfg.seed, epoch, features.size());
    EpochLoss epoch_loss;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(features[order[i]]);

      const PromptLoss loss = total_loss(encoder, report.bank, batch, options);
      if (!all_finite(loss)) {
        throw Error(ErrorCode::NonFiniteLoss, "non-finite loss or gradient at step " + std::to_string(report.steps));
      }
      ++report.steps;
      apply_update(cfg, report.bank, loss, coarse_state, fine_state, report.steps);
      epoch_loss.total += loss.value;
      epoch_loss.coarse += loss.coarse_value;
      epoch_loss.fine += loss.fine_value;
    }
    report.epochs.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }

  report.encoder_checksum_after = encoder.checksum();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

TrainReport train_pt_audio(const TrainConfig& cfg, const FeatureFile& features,
                           const std::vector<std::string>& class_names, const EncoderWeights& encoder,
                           const EpochCallback& on_epoch) {
  cfg.validate();
  if (features.records.empty()) throw Error(ErrorCode::InvalidInput, "feature file is empty");
  if (encoder.dim() != cfg.dim || features.dim != cfg.dim) {
    throw Error(ErrorCode::DimensionMismatch, "feature, encoder and config dimensions differ");
  }

  const auto started = std::chrono::steady_clock::now();
  TrainReport report;
  report.encoder_checksum_before = encoder.checksum();
  report.bank = init_prompts(cfg, class_names);

  AdamState coarse_state, fine_state;
  const auto dim = static_cast<Eigen::Index>(cfg.dim);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(cfg.seed, epoch, features.records.size());
    EpochLoss epoch_loss;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      Mat clips(static_cast<Eigen::Index>(end - begin), dim);
      std::vector<Label> labels;
      for (std::size_t i = begin; i < end; ++i) {
        clips.row(static_cast<Eigen::Index>(i - begin)) = features.records[order[i]].clip.transpose();
        labels.push_back(features.records[order[i]].label);
      }
      const PromptLoss loss = pt_audio_loss(encoder, report.bank, clips, labels, cfg.tau);
      if (!all_finite(loss)) {
        throw Error(ErrorCode::NonFiniteLoss, "non-finite loss or gradient at step " + std::to_string(report.steps));
      }
      ++report.steps;
      apply_update(cfg, report.bank, loss, coarse_state, fine_state, report.steps);
      epoch_loss.total += loss.value;
      epoch_loss.coarse += loss.coarse_value;
    }
    report.epochs.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }

  report.encoder_checksum_after = encoder.checksum();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::string report_to_json_string(const TrainReport& report) {
  ordered_json doc;
  doc["steps"] = report.steps;
  doc["encoder_checksum_before"] = report.encoder_checksum_before;
  doc["encoder_checksum_after"] = report.encoder_checksum_after;
  doc["bank_checksum"] = report.bank.checksum();
  ordered_json epochs = ordered_json::array();
  for (std::size_t i = 0; i < report.epochs.size(); ++i) {
    ordered_json e;
    e["epoch"] = i + 1;
    e["total"] = report.epochs[i].total;
    e["cpt"] = report.epochs[i].coarse;
    e["fpt"] = report.epochs[i].fine;
    epochs.push_back(std::move(e));
  }
  doc["epochs"] = std::move(epochs);
  return doc.dump(2) + "\n";
}

}  // namespace ptext
