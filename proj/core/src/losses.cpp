#include "ptext/losses.hpp"

#include <cmath>
#include <vector>

#include "ptext/error.hpp"
#include "ptext/scoring.hpp"

namespace ptext {
namespace {

void check_label_shape(const Mat& scores, std::span<const Label> labels) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
    throw Error(ErrorCode::InvalidLabel, "got " + std::to_string(labels.size()) + " labels for " +
                                             std::to_string(scores.rows()) + " score rows");
  }
  for (const auto& label : labels) {
    if (static_cast<Eigen::Index>(label.size()) != scores.cols()) {
      throw Error(ErrorCode::InvalidLabel, "label length does not match the number of classes");
    }
  }
}

std::vector<EncodedText> encode_all_classes(const EncoderWeights& w, const PromptBank& bank, Grain grain) {
  std::vector<EncodedText> out;
  out.reserve(bank.num_classes());
  for (std::size_t c = 0; c < bank.num_classes(); ++c) out.push_back(encode_class_prompt(w, bank, grain, c, true));
  return out;
}

Mat stack_sentences(const std::vector<EncodedText>& enc, Eigen::Index dim) {
  Mat out(static_cast<Eigen::Index>(enc.size()), dim);
  for (std::size_t c = 0; c < enc.size(); ++c) out.row(static_cast<Eigen::Index>(c)) = enc[c].sentence.transpose();
  return out;
}

// Chains d(loss)/d(u_c) through the encoder for every class and sums.
Mat prompt_gradient(const EncoderWeights& w, const std::vector<EncodedText>& enc, const Mat& grad_class_feats,
                    std::size_t prompt_length) {
  Mat grad = Mat::Zero(static_cast<Eigen::Index>(prompt_length), static_cast<Eigen::Index>(w.dim()));
  for (std::size_t c = 0; c < enc.size(); ++c) {
    grad += backprop_prompt(w, enc[c], grad_class_feats.row(static_cast<Eigen::Index>(c)).transpose());
  }
  return grad;
}

LossValue task_loss(const Mat& scores, std::span<const Label> labels, const LossOptions& options) {
  return options.task == TaskKind::SingleLabel ? ce_loss(scores, labels, options.tau)
                                               : ranking_loss(scores, labels, options.margin);
}

}  // namespace

LossValue ce_loss(const Mat& scores, std::span<const Label> labels, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidInput, "tau must be positive");
  check_label_shape(scores, labels);
  LossValue out;
  out.grad_scores = Mat::Zero(scores.rows(), scores.cols());
  for (Eigen::Index m = 0; m < scores.rows(); ++m) {
    const auto& label = labels[static_cast<std::size_t>(m)];
    Eigen::Index truth = -1;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      if (label[static_cast<std::size_t>(c)] > 1) throw Error(ErrorCode::InvalidLabel, "label entries must be 0 or 1");
      if (label[static_cast<std::size_t>(c)] == 1) {
        if (truth >= 0) throw Error(ErrorCode::InvalidLabel, "row " + std::to_string(m) + " is not one-hot");
        truth = c;
      }
    }
    if (truth < 0) throw Error(ErrorCode::InvalidLabel, "row " + std::to_string(m) + " has no positive class");

    const Eigen::ArrayXd logits = scores.row(m).transpose().array() / tau;
    const double peak = logits.maxCoeff();
    const Eigen::ArrayXd e = (logits - peak).exp();
    const double z = e.sum();
    out.value += std::log(z) + peak - logits(truth);
    Eigen::ArrayXd prob = e / z;
    prob(truth) -= 1.0;
    out.grad_scores.row(m) = (prob / tau).matrix().transpose();
  }
  return out;
}

LossValue ranking_loss(const Mat& scores, std::span<const Label> labels, double margin) {
  check_label_shape(scores, labels);
  LossValue out;
  out.grad_scores = Mat::Zero(scores.rows(), scores.cols());
  for (Eigen::Index m = 0; m < scores.rows(); ++m) {
    const auto& label = labels[static_cast<std::size_t>(m)];
    std::vector<Eigen::Index> pos, neg;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      const auto v = label[static_cast<std::size_t>(c)];
      if (v > 1) throw Error(ErrorCode::InvalidLabel, "label entries must be 0 or 1");
      (v ? pos : neg).push_back(c);
    }
    if (pos.empty() || neg.empty()) {
      throw Error(ErrorCode::DegenerateLabels,
                  "row " + std::to_string(m) + " needs at least one positive and one negative class");
    }
    for (auto i : pos) {
      for (auto j : neg) {
        const double hinge = margin - scores(m, i) + scores(m, j);
        if (hinge > 0.0) {
          out.value += hinge;
          out.grad_scores(m, i) -= 1.0;
          out.grad_scores(m, j) += 1.0;
        }
      }
    }
  }
  return out;
}

PromptLoss total_loss(const EncoderWeights& w, const PromptBank& bank, std::span<const CaptionFeatures> batch,
                      const LossOptions& options) {
  if (batch.empty()) throw Error(ErrorCode::InvalidInput, "loss batch is empty");
  if (bank.dim() != w.dim()) throw Error(ErrorCode::DimensionMismatch, "prompt bank and encoder differ in dimension");
  const auto dim = static_cast<Eigen::Index>(w.dim());
  const auto num_classes = static_cast<Eigen::Index>(bank.num_classes());
  const auto n = static_cast<Eigen::Index>(bank.prompt_length());
  const auto rows = static_cast<Eigen::Index>(batch.size());

  std::vector<Label> labels;
  labels.reserve(batch.size());
  for (const auto& f : batch) labels.push_back(f.label);

  PromptLoss out;
  out.grad_coarse = Mat::Zero(n, dim);
  out.grad_fine = Mat::Zero(n, dim);

  if (options.use_coarse) {
    const auto enc = encode_all_classes(w, bank, Grain::Coarse);
    const Mat class_feats = stack_sentences(enc, dim);
    Mat sentences(rows, dim);
    Mat q(rows, num_classes);
    for (Eigen::Index m = 0; m < rows; ++m) {
      sentences.row(m) = batch[static_cast<std::size_t>(m)].sentence.transpose();
      q.row(m) = coarse_scores(batch[static_cast<std::size_t>(m)].sentence, class_feats).transpose();
    }
    const LossValue loss = task_loss(q, labels, options);
    out.coarse_value = loss.value;
    const Mat grad_class = loss.grad_scores.transpose() * sentences;  // C x d
    out.grad_coarse = prompt_gradient(w, enc, grad_class, bank.prompt_length());
  }

  if (options.use_fine) {
    const auto enc = encode_all_classes(w, bank, Grain::Fine);
    const Mat class_feats = stack_sentences(enc, dim);
    std::vector<Mat> p(batch.size());
    Mat q(rows, num_classes);
    for (Eigen::Index m = 0; m < rows; ++m) {
      p[static_cast<std::size_t>(m)] = word_scores(batch[static_cast<std::size_t>(m)].words, class_feats);
      q.row(m) = aggregate_fine(p[static_cast<std::size_t>(m)], options.tau_s).transpose();
    }
    const LossValue loss = task_loss(q, labels, options);
    out.fine_value = loss.value;
    Mat grad_class = Mat::Zero(num_classes, dim);
    for (Eigen::Index m = 0; m < rows; ++m) {
      const auto idx = static_cast<std::size_t>(m);
      const Mat grad_p = aggregate_fine_backward(p[idx], options.tau_s, loss.grad_scores.row(m).transpose());
      grad_class += grad_p.transpose() * batch[idx].words;
    }
    out.grad_fine = prompt_gradient(w, enc, grad_class, bank.prompt_length());
  }

  out.value = out.coarse_value + out.fine_value;
  return out;
}

PromptLoss pt_audio_loss(const EncoderWeights& w, const PromptBank& bank, const Mat& audio_feats,
                         std::span<const Label> labels, double tau) {
  if (bank.dim() != w.dim() || audio_feats.cols() != static_cast<Eigen::Index>(w.dim())) {
    throw Error(ErrorCode::DimensionMismatch, "audio features, prompt bank and encoder must share a dimension");
  }
  const auto enc = encode_all_classes(w, bank, Grain::Coarse);
  const Mat class_feats = stack_sentences(enc, audio_feats.cols());
  Mat s(audio_feats.rows(), class_feats.rows());
  for (Eigen::Index k = 0; k < audio_feats.rows(); ++k) {
    s.row(k) = coarse_scores(audio_feats.row(k).transpose(), class_feats).transpose();
  }
  const LossValue loss = ce_loss(s, labels, tau);

  // cos(f, u) = <f / |f|, u> for unit u.
  Mat unit = audio_feats;
  for (Eigen::Index k = 0; k < unit.rows(); ++k) unit.row(k).normalize();

  PromptLoss out;
  out.value = out.coarse_value = loss.value;
  out.grad_coarse = prompt_gradient(w, enc, loss.grad_scores.transpose() * unit, bank.prompt_length());
  out.grad_fine = Mat::Zero(bank.fine.rows(), bank.fine.cols());
  return out;
}

}  // namespace ptext
