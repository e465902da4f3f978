#include "ptext/encoder.hpp"

#include <cmath>
#include <cstring>

#include "ptext/error.hpp"
#include "ptext/rng.hpp"

namespace ptext {
namespace {

Mat gaussian_matrix(std::uint64_t seed, const char* tag, std::size_t rows, std::size_t cols, double stddev) {
  CounterRng rng(seed, tag);
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = stddev * rng.next_normal();
  }
  return m;
}

std::uint64_t hash_bytes(std::uint64_t h, const void* data, std::size_t size) noexcept {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_matrix(std::uint64_t h, const Mat& m) noexcept {
  return hash_bytes(h, m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

void softmax_inplace(Eigen::Ref<Vec> logits) {
  const double peak = logits.maxCoeff();
  logits = (logits.array() - peak).exp();
  logits /= logits.sum();
}

// Builds the T x d input matrix: [CLS], optional prompt rows, then tokens.
Mat assemble_inputs(const EncoderWeights& w, const Mat* prompt_rows, const TokenSeq& tokens) {
  const std::size_t dim = w.dim();
  const std::size_t n_prompt = prompt_rows ? static_cast<std::size_t>(prompt_rows->rows()) : 0;
  const std::size_t total = 1 + n_prompt + tokens.size();
  Mat x(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(dim));
  x.row(0) = w.cls_embedding().transpose();
  for (std::size_t j = 0; j < n_prompt; ++j) x.row(static_cast<Eigen::Index>(1 + j)) = prompt_rows->row(static_cast<Eigen::Index>(j));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto id = tokens.tokens[i];
    if (id >= w.bucket_count()) {
      throw Error(ErrorCode::IndexOutOfRange, "token id " + std::to_string(id) + " exceeds the bucket count");
    }
    x.row(static_cast<Eigen::Index>(1 + n_prompt + i)) = w.token_embed().row(id);
  }
  for (std::size_t pos = 0; pos < total; ++pos) {
    x.row(static_cast<Eigen::Index>(pos)) += position_encoding(pos, dim).transpose();
  }
  return x;
}

}  // namespace

Vec position_encoding(std::size_t pos, std::size_t dim) {
  Vec pe(static_cast<Eigen::Index>(dim));
  const double amplitude = 1.0 / static_cast<double>(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double pair = static_cast<double>(i - i % 2);
    const double angle = static_cast<double>(pos) / std::pow(10000.0, pair / static_cast<double>(dim));
    pe(static_cast<Eigen::Index>(i)) = amplitude * (i % 2 == 0 ? std::sin(angle) : std::cos(angle));
  }
  return pe;
}

EncoderWeights::EncoderWeights(std::uint64_t seed, std::size_t dim, std::size_t bucket_count)
    : seed_(seed), dim_(dim), bucket_count_(bucket_count) {
  if (dim < 2) throw Error(ErrorCode::InvalidInput, "encoder dimension must be at least 2");
  if (bucket_count < dim) throw Error(ErrorCode::InvalidInput, "bucket count must be at least the dimension");
  const double stddev = 1.0 / std::sqrt(static_cast<double>(dim));
  token_embed_ = gaussian_matrix(seed, "encoder.token_embed", bucket_count, dim, stddev);
  attn_q_ = gaussian_matrix(seed, "encoder.attn_q", dim, dim, stddev);
  attn_k_ = gaussian_matrix(seed, "encoder.attn_k", dim, dim, stddev);
  attn_v_ = gaussian_matrix(seed, "encoder.attn_v", dim, dim, stddev);
}

std::uint64_t EncoderWeights::checksum() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = hash_matrix(h, token_embed_);
  h = hash_matrix(h, attn_q_);
  h = hash_matrix(h, attn_k_);
  h = hash_matrix(h, attn_v_);
  return h;
}

EncoderWeights init_encoder(std::uint64_t seed, std::size_t dim, std::size_t bucket_count) {
  return EncoderWeights(seed, dim, bucket_count);
}

EncodedText encode_caption(const EncoderWeights& w, const TokenSeq& tokens) {
  if (tokens.size() == 0) throw Error(ErrorCode::EmptySequence, "caption has no tokens");
  const Mat x = assemble_inputs(w, nullptr, tokens);
  const Mat q = x * w.attn_q();
  const Mat k = x * w.attn_k();
  const Mat v = x * w.attn_v();
  Mat scores = (q * k.transpose()) / std::sqrt(static_cast<double>(w.dim()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Vec row = scores.row(i).transpose();
    softmax_inplace(row);
    scores.row(i) = row.transpose();
  }
  Mat h = x + scores * v;
  for (Eigen::Index i = 0; i < h.rows(); ++i) h.row(i).normalize();

  EncodedText out;
  out.sentence = h.row(0).transpose();
  out.words = h.bottomRows(h.rows() - 1);
  return out;
}

const char* to_string(Grain g) noexcept { return g == Grain::Coarse ? "coarse" : "fine"; }

std::uint64_t PromptBank::checksum() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = hash_matrix(h, coarse);
  h = hash_matrix(h, fine);
  for (const auto& name : class_names) {
    h = hash_bytes(h, name.data(), name.size());
    h = hash_bytes(h, "\0", 1);
  }
  return hash_bytes(h, &seed, sizeof(seed));
}

bool PromptBank::operator==(const PromptBank& other) const {
  return coarse.rows() == other.coarse.rows() && coarse.cols() == other.coarse.cols() &&
         fine.rows() == other.fine.rows() && fine.cols() == other.fine.cols() && coarse == other.coarse &&
         fine == other.fine && class_names == other.class_names && class_tokens == other.class_tokens &&
         seed == other.seed;
}

PromptBank with_classes(const PromptBank& bank, const std::vector<std::string>& class_names,
                        std::size_t bucket_count) {
  PromptBank out;
  out.coarse = bank.coarse;
  out.fine = bank.fine;
  out.seed = bank.seed;
  out.class_names = class_names;
  for (const auto& name : class_names) {
    out.class_tokens.push_back(tokenize(name, static_cast<std::uint32_t>(bucket_count)));
  }
  return out;
}

EncodedText encode_prompted(const EncoderWeights& w, const Mat& prompt_rows, const TokenSeq& class_tokens,
                            bool want_grad) {
  if (static_cast<std::size_t>(prompt_rows.cols()) != w.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "prompt rows have width " + std::to_string(prompt_rows.cols()) +
                                                  ", encoder dimension is " + std::to_string(w.dim()));
  }
  const Mat x = assemble_inputs(w, &prompt_rows, class_tokens);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(w.dim()));

  // Only the CLS row is needed for a class feature.
  const Vec q0 = (x.row(0) * w.attn_q()).transpose();
  Mat k = x * w.attn_k();
  Mat v = x * w.attn_v();
  Vec attn = (k * q0) * inv_sqrt_d;
  softmax_inplace(attn);
  Vec hidden = x.row(0).transpose() + v.transpose() * attn;
  const double norm = hidden.norm();
  if (!(norm > 0.0)) throw Error(ErrorCode::ZeroVector, "class prompt encodes to a zero vector");

  EncodedText out;
  out.sentence = hidden / norm;
  if (want_grad) {
    ForwardCache cache;
    cache.inputs = x;
    cache.keys = std::move(k);
    cache.values = std::move(v);
    cache.cls_query = q0;
    cache.cls_attention = std::move(attn);
    cache.cls_hidden = std::move(hidden);
    cache.prompt_begin = 1;
    cache.prompt_length = static_cast<std::size_t>(prompt_rows.rows());
    out.cache = std::move(cache);
  }
  return out;
}

EncodedText encode_class_prompt(const EncoderWeights& w, const PromptBank& bank, Grain grain,
                                std::size_t class_index, bool want_grad) {
  if (class_index >= bank.num_classes()) {
    throw Error(ErrorCode::IndexOutOfRange, "class index " + std::to_string(class_index) + " out of range for " +
                                                std::to_string(bank.num_classes()) + " classes");
  }
  return encode_prompted(w, bank.rows(grain), bank.class_tokens[class_index], want_grad);
}

Mat backprop_prompt(const EncoderWeights& w, const EncodedText& encoded, const Vec& grad_sentence) {
  if (!encoded.cache) throw Error(ErrorCode::NoCache, "forward pass was run without want_grad");
  const ForwardCache& c = *encoded.cache;
  const auto dim = static_cast<Eigen::Index>(w.dim());
  if (grad_sentence.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch, "upstream gradient has the wrong length");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(w.dim()));

  // Through the L2 normalization of the CLS output.
  const Vec& s = encoded.sentence;
  const Vec g_hidden = (grad_sentence - s * s.dot(grad_sentence)) / c.cls_hidden.norm();

  // hidden = x0 + sum_t a_t v_t,  a = softmax(K q0 / sqrt(d)).
  const Vec g_attn = c.values * g_hidden;
  const double mean = c.cls_attention.dot(g_attn);
  const Vec g_logit = c.cls_attention.array() * (g_attn.array() - mean);

  Mat grad(static_cast<Eigen::Index>(c.prompt_length), dim);
  for (std::size_t j = 0; j < c.prompt_length; ++j) {
    const auto t = static_cast<Eigen::Index>(c.prompt_begin + j);
    const Eigen::RowVectorXd g_value = c.cls_attention(t) * g_hidden.transpose();
    const Eigen::RowVectorXd g_key = (g_logit(t) * inv_sqrt_d) * c.cls_query.transpose();
    grad.row(static_cast<Eigen::Index>(j)) = g_value * w.attn_v().transpose() + g_key * w.attn_k().transpose();
  }
  return grad;
}

Mat encode_class_features(const EncoderWeights& w, const PromptBank& bank, Grain grain) {
  Mat out(static_cast<Eigen::Index>(bank.num_classes()), static_cast<Eigen::Index>(w.dim()));
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    out.row(static_cast<Eigen::Index>(c)) = encode_class_prompt(w, bank, grain, c, false).sentence.transpose();
  }
  return out;
}

std::vector<CaptionFeatures> encode_captions(const EncoderWeights& w, const LabeledCorpus& corpus) {
  std::vector<CaptionFeatures> out;
  out.reserve(corpus.captions.size());
  for (const auto& cap : corpus.captions) {
    auto enc = encode_caption(w, tokenize(cap.text, static_cast<std::uint32_t>(w.bucket_count())));
    out.push_back({std::move(enc.sentence), std::move(enc.words), cap.label});
  }
  return out;
}

}  // namespace ptext
