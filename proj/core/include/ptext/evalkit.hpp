#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptext/corpus.hpp"
#include "ptext/encoder.hpp"
#include "ptext/features.hpp"
#include "ptext/scoring.hpp"
#include "ptext/trainer.hpp"

namespace ptext {

enum class Metric { Accuracy, MeanAveragePrecision };

const char* to_string(Metric metric) noexcept;

/// `value` is the mean accuracy (single-label) or the mean of per-class APs
/// (multi-label). For accuracy, `per_class` holds per-class recall and is NaN
/// for classes without samples.
struct EvalResult {
  Metric metric = Metric::Accuracy;
  double value = 0.0;
  std::vector<double> per_class;
  std::size_t samples = 0;
};

/// {"metric": ..., "value": ..., "per_class": [...], "M": ...}
std::string to_json_string(const EvalResult& result);

inline constexpr std::string_view kZeroShotTemplate = "this is a sound of [CLASS]";

/// Class features w_c from a hand-written template, no learnable prompts.
/// Throws MissingPlaceholder when the template lacks "[CLASS]".
Mat zero_shot_features(const EncoderWeights& w, std::string_view template_text,
                       const std::vector<std::string>& class_names);

/// Argmax; ties go to the lowest index.
std::size_t predict_single_label(const Vec& scores);

EvalResult accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                    std::size_t num_classes);

/// Non-interpolated AP of one class column: ranks samples by descending score
/// (ties by sample index) and averages precision at each positive.
double average_precision(const Vec& scores, const std::vector<std::uint8_t>& relevant);

EvalResult mean_average_precision(const Mat& scores, std::span<const Label> labels);

enum class EvalMode { Coarse, Fine, Ensemble, ZeroShot };

const char* to_string(EvalMode mode) noexcept;
EvalMode eval_mode_from_string(std::string_view s);

struct EvalOptions {
  double tau_s = 0.10;
  std::string zero_shot_template = std::string(kZeroShotTemplate);
};

/// Scores held-out captions as surrogate audio: sentence features play the
/// clip-level role, word features the frame-level role.
ScoreMatrix score_corpus(const EncoderWeights& w, const PromptBank& bank, const LabeledCorpus& eval_set,
                         EvalMode mode, const EvalOptions& options = {});

/// Scores externally extracted features. Fine and ensemble modes need frames
/// on every record (MissingFrameFeatures otherwise).
ScoreMatrix score_features(const EncoderWeights& w, const PromptBank& bank, const FeatureFile& features,
                           EvalMode mode, const EvalOptions& options = {});

/// Accuracy for single-label tasks, mAP for multi-label tasks.
EvalResult compute_metric(const ScoreMatrix& scores, std::span<const Label> labels, TaskKind task);

EvalResult evaluate(const EncoderWeights& w, const PromptBank& bank, const LabeledCorpus& eval_set, EvalMode mode,
                    const EvalOptions& options = {});
EvalResult evaluate(const EncoderWeights& w, const PromptBank& bank, const FeatureFile& features, TaskKind task,
                    EvalMode mode, const EvalOptions& options = {});

struct TransferResult {
  EvalResult result;
  std::vector<std::size_t> unseen_classes;  // target classes absent from the source bank
  double unseen_value = 0.0;                // metric restricted to unseen classes
};

/// Rebuilds class features for the target class names from the source prompt
/// rows and evaluates. The source bank is not modified.
TransferResult transfer_eval(const EncoderWeights& w, const PromptBank& source, const LabeledCorpus& target,
                             EvalMode mode = EvalMode::Ensemble, const EvalOptions& options = {});

struct SweepRow {
  std::size_t prompt_length = 0;
  EvalResult result;
};

struct SweepTable {
  EvalMode mode = EvalMode::Ensemble;
  EvalResult zero_shot;
  std::vector<SweepRow> rows;
};

/// Trains one bank per prompt length (all else equal) and evaluates each on
/// `eval_set`, alongside the zero-shot baseline.
SweepTable prompt_length_sweep(const TrainConfig& cfg, const LabeledCorpus& train_set, const LabeledCorpus& eval_set,
                               std::span<const std::size_t> lengths, EvalMode mode = EvalMode::Ensemble,
                               const EvalOptions& options = {});

std::string to_json_string(const SweepTable& table);

}  // namespace ptext
