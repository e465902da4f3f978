#pragma once

#include <span>

#include "ptext/corpus.hpp"
#include "ptext/encoder.hpp"

namespace ptext {

/// A loss value and its gradient with respect to the score matrix it was
/// computed from. Losses are summed over rows, never averaged.
struct LossValue {
  double value = 0.0;
  Mat grad_scores;
};

/// Softmax cross-entropy over scores / tau against one-hot rows.
LossValue ce_loss(const Mat& scores, std::span<const Label> labels, double tau);

/// Pairwise hinge: sum over positive i, negative j of max(0, margin - q_i + q_j).
/// The subgradient at an exact kink is zero.
LossValue ranking_loss(const Mat& scores, std::span<const Label> labels, double margin = 1.0);

struct LossOptions {
  TaskKind task = TaskKind::SingleLabel;
  double tau = 0.01;
  double tau_s = 0.10;
  double margin = 1.0;
  bool use_coarse = true;
  bool use_fine = true;
};

/// Loss value split by grain, plus gradients for both prompt matrices.
struct PromptLoss {
  double value = 0.0;
  double coarse_value = 0.0;
  double fine_value = 0.0;
  Mat grad_coarse;  // N x d, d(value)/dV
  Mat grad_fine;    // N x d, d(value)/dV'
};

/// Text-supervised objective: coarse loss on sentence scores q plus fine loss
/// on aggregated word scores q'. Cross-entropy for single-label tasks, ranking
/// loss for multi-label tasks, for both grains.
PromptLoss total_loss(const EncoderWeights& w, const PromptBank& bank, std::span<const CaptionFeatures> batch,
                      const LossOptions& options);

/// Audio-supervised baseline: cross-entropy on cosines between externally
/// supplied clip features (rows of `audio_feats`) and the coarse class
/// features. Only the coarse prompt receives gradient.
PromptLoss pt_audio_loss(const EncoderWeights& w, const PromptBank& bank, const Mat& audio_feats,
                         std::span<const Label> labels, double tau);

}  // namespace ptext
