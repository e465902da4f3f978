#include "ptext/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "ptext/error.hpp"

namespace ptext {
namespace {

void require_same_width(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

double cosine(const Vec& a, const Vec& b) {
  require_same_width(a.size(), b.size(), "cosine operands differ in length");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

Vec coarse_scores(const Vec& caption_feat, const Mat& class_feats) {
  require_same_width(caption_feat.size(), class_feats.cols(), "caption and class features differ in width");
  Vec out(class_feats.rows());
  for (Eigen::Index c = 0; c < class_feats.rows(); ++c) out(c) = cosine(caption_feat, class_feats.row(c).transpose());
  return out;
}

Mat word_scores(const Mat& word_feats, const Mat& fine_class_feats) {
  require_same_width(word_feats.cols(), fine_class_feats.cols(), "word and class features differ in width");
  Mat out(word_feats.rows(), fine_class_feats.rows());
  for (Eigen::Index o = 0; o < word_feats.rows(); ++o) {
    out.row(o) = coarse_scores(word_feats.row(o).transpose(), fine_class_feats).transpose();
  }
  return out;
}

Mat aggregation_weights(const Mat& p, double tau_s) {
  if (!(tau_s > 0.0)) throw Error(ErrorCode::InvalidInput, "tau_s must be positive");
  Mat weights(p.rows(), p.cols());
  for (Eigen::Index l = 0; l < p.cols(); ++l) {
    const double peak = p.col(l).maxCoeff();
    weights.col(l) = ((p.col(l).array() - peak) / tau_s).exp();
    weights.col(l) /= weights.col(l).sum();
  }
  return weights;
}

Vec aggregate_fine(const Mat& p, double tau_s) {
  const Mat weights = aggregation_weights(p, tau_s);
  Vec q = weights.cwiseProduct(p).colwise().sum().transpose();
  // Rounding can leave the weighted sum an ulp outside the column range.
  for (Eigen::Index l = 0; l < q.size(); ++l) q(l) = std::clamp(q(l), p.col(l).minCoeff(), p.col(l).maxCoeff());
  return q;
}

Mat aggregate_fine_backward(const Mat& p, double tau_s, const Vec& grad_out) {
  require_same_width(p.cols(), grad_out.size(), "upstream gradient length");
  const Mat weights = aggregation_weights(p, tau_s);
  const Vec agg = weights.cwiseProduct(p).colwise().sum().transpose();
  // d q_l / d p_{o,l} = w_o (1 + (p_{o,l} - q_l) / tau_s)
  Mat grad(p.rows(), p.cols());
  for (Eigen::Index l = 0; l < p.cols(); ++l) {
    grad.col(l) = grad_out(l) * weights.col(l).array() * (1.0 + (p.col(l).array() - agg(l)) / tau_s);
  }
  return grad;
}

Vec ensemble(const Vec& coarse, const Vec& fine) {
  require_same_width(coarse.size(), fine.size(), "ensemble operands differ in length");
  return coarse + fine;
}

void write_score_csv(std::ostream& out, const ScoreMatrix& scores, const std::vector<std::string>& class_names) {
  require_same_width(scores.values.cols(), static_cast<Eigen::Index>(class_names.size()), "score columns vs class names");
  for (std::size_t c = 0; c < class_names.size(); ++c) out << (c ? "," : "") << csv_field(class_names[c]);
  out << '\n';
  const auto old_precision = out.precision(17);
  for (Eigen::Index m = 0; m < scores.values.rows(); ++m) {
    for (Eigen::Index c = 0; c < scores.values.cols(); ++c) out << (c ? "," : "") << scores.values(m, c);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace ptext
