#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ptext/encoder.hpp"

namespace ptext {

enum class ScoreGrain { Coarse, Fine, Ensemble };

/// M x C match scores. Coarse and fine entries lie in [-1, 1], ensemble
/// entries in [-2, 2].
struct ScoreMatrix {
  Mat values;
  ScoreGrain grain = ScoreGrain::Coarse;
};

double cosine(const Vec& a, const Vec& b);

/// Row of C cosines between one caption feature and the class features
/// (rows of `class_feats`).
Vec coarse_scores(const Vec& caption_feat, const Mat& class_feats);

/// O x C word-class cosines.
Mat word_scores(const Mat& word_feats, const Mat& fine_class_feats);

/// Per-column softmax of p / tau_s (the attention weights over words).
Mat aggregation_weights(const Mat& word_class_scores, double tau_s);

/// Softmax-weighted sum over words for every class column.
Vec aggregate_fine(const Mat& word_class_scores, double tau_s);

/// d(aggregate_fine)/d(p) contracted with an upstream gradient of length C.
Mat aggregate_fine_backward(const Mat& word_class_scores, double tau_s, const Vec& grad_out);

Vec ensemble(const Vec& coarse, const Vec& fine);

/// CSV with a header row of class names and one row per sample.
void write_score_csv(std::ostream& out, const ScoreMatrix& scores, const std::vector<std::string>& class_names);

}  // namespace ptext
