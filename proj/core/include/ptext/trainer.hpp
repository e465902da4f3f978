#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ptext/corpus.hpp"
#include "ptext/encoder.hpp"
#include "ptext/features.hpp"
#include "ptext/losses.hpp"

namespace ptext {

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  std::size_t prompt_length = 16;  // N
  std::size_t dim = 32;            // d
  std::size_t bucket_count = kDefaultBucketCount;
  double tau = 0.01;
  double tau_s = 0.10;
  std::size_t captions_per_class = 16;  // L
  double lr = 0.01;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::optional<TaskKind> task;  // when set, must match the corpus
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double margin = 1.0;
  double held_out_fraction = 0.2;

  /// Throws Error(InvalidConfig) on out-of-range fields.
  void validate() const;
};

/// Flat JSON object; every key is optional, unknown keys are rejected.
/// Keys: N, d, bucket_count, tau, tau_s, L, lr, epochs, batch_size, seed,
/// task, optimizer, beta1, beta2, epsilon, margin, held_out_fraction.
TrainConfig parse_train_config(std::string_view json_text);
std::string to_json_string(const TrainConfig& cfg);

/// N x d Gaussian(0, 0.02) rows for both grains, keyed by (seed, grain).
PromptBank init_prompts(const TrainConfig& cfg, const std::vector<std::string>& class_names);

struct AdamParams {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Mat m;
  Mat v;
};

/// Bias-corrected Adam step number `step` (1-based). Empty moment matrices are
/// zero-initialized to the parameter shape.
void adam_update(Mat& params, const Mat& grads, AdamState& state, const AdamParams& hp, std::size_t step);

void sgd_update(Mat& params, const Mat& grads, double lr);

struct EpochLoss {
  double total = 0.0;
  double coarse = 0.0;
  double fine = 0.0;
};

struct TrainReport {
  std::vector<EpochLoss> epochs;
  double wall_seconds = 0.0;
  PromptBank bank;
  std::uint64_t encoder_checksum_before = 0;
  std::uint64_t encoder_checksum_after = 0;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, const EpochLoss& loss)>;

/// Text-supervised prompt tuning. Caption features are encoded once; every
/// step updates only the prompt rows. Fully determined by (cfg, corpus).
TrainReport train(const TrainConfig& cfg, const LabeledCorpus& corpus, const EncoderWeights& encoder,
                  const EpochCallback& on_epoch = {});

/// Audio-supervised baseline on clip features (coarse prompt only,
/// single-label cross-entropy).
TrainReport train_pt_audio(const TrainConfig& cfg, const FeatureFile& features,
                           const std::vector<std::string>& class_names, const EncoderWeights& encoder,
                           const EpochCallback& on_epoch = {});

/// Per-epoch losses and checksums, without wall time so that reruns compare
/// byte for byte.
std::string report_to_json_string(const TrainReport& report);

}  // namespace ptext
