#include "ptext/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ptext/error.hpp"

namespace ptext {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kPlaceholder = "[CLASS]";

// Per-sample inputs to scoring, whether they came from captions or from an
// external feature file.
struct SampleView {
  const Vec* clip;
  const Mat* frames;
};

ScoreMatrix score_samples(const EncoderWeights& w, const PromptBank& bank, const std::vector<std::string>& class_names,
                          std::span<const SampleView> samples, EvalMode mode, const EvalOptions& options) {
  const auto rows = static_cast<Eigen::Index>(samples.size());
  const auto cols = static_cast<Eigen::Index>(class_names.size());
  ScoreMatrix out;
  out.values = Mat::Zero(rows, cols);

  if (mode == EvalMode::ZeroShot) {
    const Mat class_feats = zero_shot_features(w, options.zero_shot_template, class_names);
    for (Eigen::Index m = 0; m < rows; ++m) {
      out.values.row(m) = coarse_scores(*samples[static_cast<std::size_t>(m)].clip, class_feats).transpose();
    }
    out.grain = ScoreGrain::Coarse;
    return out;
  }

  const bool want_coarse = mode == EvalMode::Coarse || mode == EvalMode::Ensemble;
  const bool want_fine = mode == EvalMode::Fine || mode == EvalMode::Ensemble;
  if (want_coarse) {
    const Mat class_feats = encode_class_features(w, bank, Grain::Coarse);
    for (Eigen::Index m = 0; m < rows; ++m) {
      out.values.row(m) += coarse_scores(*samples[static_cast<std::size_t>(m)].clip, class_feats).transpose();
    }
  }
  if (want_fine) {
    const Mat class_feats = encode_class_features(w, bank, Grain::Fine);
    for (Eigen::Index m = 0; m < rows; ++m) {
      const Mat* frames = samples[static_cast<std::size_t>(m)].frames;
      if (frames == nullptr || frames->rows() == 0) {
        throw Error(ErrorCode::MissingFrameFeatures,
                    "sample " + std::to_string(m) + " has no frame-level features for " + to_string(mode) + " mode");
      }
      out.values.row(m) += aggregate_fine(word_scores(*frames, class_feats), options.tau_s).transpose();
    }
  }
  out.grain = mode == EvalMode::Coarse ? ScoreGrain::Coarse
              : mode == EvalMode::Fine ? ScoreGrain::Fine
                                       : ScoreGrain::Ensemble;
  return out;
}

void require_matching_classes(const PromptBank& bank, const std::vector<std::string>& class_names, EvalMode mode) {
  if (mode == EvalMode::ZeroShot) return;
  if (bank.class_names != class_names) {
    throw Error(ErrorCode::InvalidInput,
                "evaluation classes do not match the prompt bank's classes; use transfer evaluation for new classes");
  }
}

ordered_json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

const char* to_string(Metric metric) noexcept {
  return metric == Metric::Accuracy ? "accuracy" : "mAP";
}

std::string to_json_string(const EvalResult& result) {
  ordered_json doc;
  doc["metric"] = to_string(result.metric);
  doc["value"] = result.value;
  ordered_json per_class = ordered_json::array();
  for (double v : result.per_class) per_class.push_back(number_or_null(v));
  doc["per_class"] = std::move(per_class);
  doc["M"] = result.samples;
  return doc.dump(2) + "\n";
}

Mat zero_shot_features(const EncoderWeights& w, std::string_view template_text,
                       const std::vector<std::string>& class_names) {
  if (template_text.find(kPlaceholder) == std::string_view::npos) {
    throw Error(ErrorCode::MissingPlaceholder, "template \"" + std::string(template_text) + "\" has no [CLASS]");
  }
  Mat out(static_cast<Eigen::Index>(class_names.size()), static_cast<Eigen::Index>(w.dim()));
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    std::string text(template_text);
    for (auto pos = text.find(kPlaceholder); pos != std::string::npos; pos = text.find(kPlaceholder, pos)) {
      text.replace(pos, kPlaceholder.size(), class_names[c]);
      pos += class_names[c].size();
    }
    const auto tokens = tokenize(text, static_cast<std::uint32_t>(w.bucket_count()));
    out.row(static_cast<Eigen::Index>(c)) = encode_caption(w, tokens).sentence.transpose();
  }
  return out;
}

std::size_t predict_single_label(const Vec& scores) {
  if (scores.size() == 0) throw Error(ErrorCode::InvalidInput, "cannot predict from an empty score row");
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < scores.size(); ++c) {
    if (scores(c) > scores(best)) best = c;
  }
  return static_cast<std::size_t>(best);
}

EvalResult accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                    std::size_t num_classes) {
  if (predictions.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(predictions.size()) + " predictions for " +
                                               std::to_string(labels.size()) + " labels");
  }
  EvalResult out;
  out.metric = Metric::Accuracy;
  out.samples = labels.size();
  std::vector<std::size_t> hits(num_classes, 0), totals(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw Error(ErrorCode::InvalidLabel, "label index out of range");
    ++totals[labels[i]];
    if (predictions[i] == labels[i]) {
      ++correct;
      ++hits[labels[i]];
    }
  }
  out.value = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  out.per_class.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    out.per_class[c] = totals[c] ? static_cast<double>(hits[c]) / static_cast<double>(totals[c])
                                 : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

double average_precision(const Vec& scores, const std::vector<std::uint8_t>& relevant) {
  if (static_cast<std::size_t>(scores.size()) != relevant.size()) {
    throw Error(ErrorCode::LengthMismatch, "scores and relevance flags differ in length");
  }
  std::vector<std::size_t> order(relevant.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (relevant[order[rank]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) throw Error(ErrorCode::ClassWithoutPositives, "no positive samples");
  return sum / static_cast<double>(hits);
}

EvalResult mean_average_precision(const Mat& scores, std::span<const Label> labels) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "score rows and labels differ in count");
  }
  EvalResult out;
  out.metric = Metric::MeanAveragePrecision;
  out.samples = labels.size();
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    std::vector<std::uint8_t> relevant(labels.size(), 0);
    for (std::size_t m = 0; m < labels.size(); ++m) {
      if (static_cast<Eigen::Index>(labels[m].size()) != scores.cols()) {
        throw Error(ErrorCode::InvalidLabel, "label length does not match the number of classes");
      }
      relevant[m] = labels[m][static_cast<std::size_t>(c)];
    }
    try {
      out.per_class.push_back(average_precision(scores.col(c), relevant));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ClassWithoutPositives) throw;
      throw Error(ErrorCode::ClassWithoutPositives, "class " + std::to_string(c) + " has no positive sample");
    }
  }
  out.value = out.per_class.empty()
                  ? 0.0
                  : std::accumulate(out.per_class.begin(), out.per_class.end(), 0.0) /
                        static_cast<double>(out.per_class.size());
  return out;
}

const char* to_string(EvalMode mode) noexcept {
  switch (mode) {
    case EvalMode::Coarse: return "coarse";
    case EvalMode::Fine: return "fine";
    case EvalMode::Ensemble: return "ensemble";
    case EvalMode::ZeroShot: return "zero_shot";
  }
  return "unknown";
}

EvalMode eval_mode_from_string(std::string_view s) {
  if (s == "coarse") return EvalMode::Coarse;
  if (s == "fine") return EvalMode::Fine;
  if (s == "ensemble") return EvalMode::Ensemble;
  if (s == "zero_shot" || s == "zero-shot") return EvalMode::ZeroShot;
  throw Error(ErrorCode::InvalidInput, "unknown evaluation mode \"" + std::string(s) + "\"");
}

ScoreMatrix score_corpus(const EncoderWeights& w, const PromptBank& bank, const LabeledCorpus& eval_set,
                         EvalMode mode, const EvalOptions& options) {
  require_matching_classes(bank, eval_set.class_names, mode);
  const auto feats = encode_captions(w, eval_set);
  std::vector<SampleView> views;
  views.reserve(feats.size());
  for (const auto& f : feats) views.push_back({&f.sentence, &f.words});
  return score_samples(w, bank, eval_set.class_names, views, mode, options);
}

ScoreMatrix score_features(const EncoderWeights& w, const PromptBank& bank, const FeatureFile& features,
                           EvalMode mode, const EvalOptions& options) {
  if (features.dim != w.dim()) throw Error(ErrorCode::DimensionMismatch, "feature file and encoder differ in dimension");
  std::vector<SampleView> views;
  views.reserve(features.records.size());
  for (const auto& r : features.records) views.push_back({&r.clip, r.has_frames() ? &r.frames : nullptr});
  return score_samples(w, bank, bank.class_names, views, mode, options);
}

EvalResult compute_metric(const ScoreMatrix& scores, std::span<const Label> labels, TaskKind task) {
  if (task == TaskKind::MultiLabel) return mean_average_precision(scores.values, labels);
  if (static_cast<std::size_t>(scores.values.rows()) != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "score rows and labels differ in count");
  }
  std::vector<std::size_t> predictions, truth;
  for (std::size_t m = 0; m < labels.size(); ++m) {
    predictions.push_back(predict_single_label(scores.values.row(static_cast<Eigen::Index>(m)).transpose()));
    const auto it = std::find(labels[m].begin(), labels[m].end(), std::uint8_t{1});
    if (it == labels[m].end()) throw Error(ErrorCode::InvalidLabel, "sample " + std::to_string(m) + " has no label");
    truth.push_back(static_cast<std::size_t>(it - labels[m].begin()));
  }
  return accuracy(predictions, truth, static_cast<std::size_t>(scores.values.cols()));
}

EvalResult evaluate(const EncoderWeights& w, const PromptBank& bank, const LabeledCorpus& eval_set, EvalMode mode,
                    const EvalOptions& options) {
  validate_labels(eval_set);
  const ScoreMatrix scores = score_corpus(w, bank, eval_set, mode, options);
  std::vector<Label> labels;
  for (const auto& cap : eval_set.captions) labels.push_back(cap.label);
  return compute_metric(scores, labels, eval_set.task);
}

EvalResult evaluate(const EncoderWeights& w, const PromptBank& bank, const FeatureFile& features, TaskKind task,
                    EvalMode mode, const EvalOptions& options) {
  const ScoreMatrix scores = score_features(w, bank, features, mode, options);
  std::vector<Label> labels;
  for (const auto& r : features.records) labels.push_back(r.label);
  return compute_metric(scores, labels, task);
}

TransferResult transfer_eval(const EncoderWeights& w, const PromptBank& source, const LabeledCorpus& target,
                             EvalMode mode, const EvalOptions& options) {
  const PromptBank rebound = with_classes(source, target.class_names, w.bucket_count());
  TransferResult out;
  out.result = evaluate(w, rebound, target, mode, options);

  for (std::size_t c = 0; c < target.num_classes(); ++c) {
    const auto& name = target.class_names[c];
    const bool seen = std::any_of(source.class_names.begin(), source.class_names.end(),
                                  [&](const std::string& s) { return normalize_text(s) == normalize_text(name); });
    if (!seen) out.unseen_classes.push_back(c);
  }
  if (out.unseen_classes.empty()) return out;

  if (target.task == TaskKind::MultiLabel) {
    double sum = 0.0;
    for (auto c : out.unseen_classes) sum += out.result.per_class[c];
    out.unseen_value = sum / static_cast<double>(out.unseen_classes.size());
  } else {
    // Pooled accuracy over samples whose true class is unseen.
    const ScoreMatrix scores = score_corpus(w, rebound, target, mode, options);
    std::size_t total = 0, correct = 0;
    for (std::size_t m = 0; m < target.captions.size(); ++m) {
      const auto truth = target.captions[m].positives().front();
      if (std::find(out.unseen_classes.begin(), out.unseen_classes.end(), truth) == out.unseen_classes.end()) continue;
      ++total;
      if (predict_single_label(scores.values.row(static_cast<Eigen::Index>(m)).transpose()) == truth) ++correct;
    }
    out.unseen_value = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  }
  return out;
}

SweepTable prompt_length_sweep(const TrainConfig& cfg, const LabeledCorpus& train_set, const LabeledCorpus& eval_set,
                               std::span<const std::size_t> lengths, EvalMode mode, const EvalOptions& options) {
  if (lengths.empty()) throw Error(ErrorCode::InvalidInput, "prompt length sweep needs at least one length");
  for (auto n : lengths) {
    if (n < 1) throw Error(ErrorCode::InvalidConfig, "prompt lengths must be at least 1");
  }
  const EncoderWeights encoder = init_encoder(cfg.seed, cfg.dim, cfg.bucket_count);
  EvalOptions opts = options;
  opts.tau_s = cfg.tau_s;

  SweepTable table;
  table.mode = mode;
  table.zero_shot = evaluate(encoder, PromptBank{}, eval_set, EvalMode::ZeroShot, opts);
  for (auto n : lengths) {
    TrainConfig run = cfg;
    run.prompt_length = n;
    const TrainReport report = train(run, train_set, encoder);
    table.rows.push_back({n, evaluate(encoder, report.bank, eval_set, mode, opts)});
  }
  return table;
}

std::string to_json_string(const SweepTable& table) {
  ordered_json doc;
  doc["mode"] = to_string(table.mode);
  doc["metric"] = to_string(table.zero_shot.metric);
  doc["zero_shot"] = table.zero_shot.value;
  ordered_json rows = ordered_json::array();
  for (const auto& row : table.rows) {
    ordered_json r;
    r["N"] = row.prompt_length;
    r["value"] = row.result.value;
    r["gain_over_zero_shot"] = row.result.value - table.zero_shot.value;
    ordered_json per_class = ordered_json::array();
    for (double v : row.result.per_class) per_class.push_back(number_or_null(v));
    r["per_class"] = std::move(per_class);
    rows.push_back(std::move(r));
  }
  doc["rows"] = std::move(rows);
  return doc.dump(2) + "\n";
}

}  // namespace ptext
