#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ptext/corpus.hpp"

namespace ptext {

using Vec = Eigen::VectorXd;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Sinusoidal position code for `pos`, scaled to amplitude 1/dim so that it
/// stays small next to token embeddings of norm ~1.
Vec position_encoding(std::size_t pos, std::size_t dim);

/// Frozen parameters of the compact text encoder. Everything is derived from
/// (seed, dim, bucket_count); instances are immutable once built.
class EncoderWeights {
 public:
  EncoderWeights(std::uint64_t seed, std::size_t dim, std::size_t bucket_count);

  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t bucket_count() const noexcept { return bucket_count_; }

  const Mat& token_embed() const noexcept { return token_embed_; }
  const Mat& attn_q() const noexcept { return attn_q_; }
  const Mat& attn_k() const noexcept { return attn_k_; }
  const Mat& attn_v() const noexcept { return attn_v_; }

  /// The [CLS] slot carries no content embedding; only its position code.
  Vec cls_embedding() const { return Vec::Zero(static_cast<Eigen::Index>(dim_)); }

  /// FNV-1a over the raw bytes of every matrix.
  std::uint64_t checksum() const noexcept;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
  std::size_t bucket_count_;
  Mat token_embed_;
  Mat attn_q_;
  Mat attn_k_;
  Mat attn_v_;
};

EncoderWeights init_encoder(std::uint64_t seed, std::size_t dim = 32,
                            std::size_t bucket_count = kDefaultBucketCount);

/// Activations kept from a forward pass so the prompt gradient can be formed.
struct ForwardCache {
  Mat inputs;        // T x d, embeddings plus position codes
  Mat keys;          // T x d
  Mat values;        // T x d
  Vec cls_query;     // d
  Vec cls_attention; // T, softmax row of the CLS query
  Vec cls_hidden;    // d, un-normalized CLS output
  std::size_t prompt_begin = 0;
  std::size_t prompt_length = 0;
};

struct EncodedText {
  Vec sentence;   // unit norm
  Mat words;      // O x d, unit-norm rows; empty for prompt encodings
  std::optional<ForwardCache> cache;
};

/// [CLS] followed by the caption tokens; returns the normalized CLS output and
/// the normalized outputs at every word position.
EncodedText encode_caption(const EncoderWeights& w, const TokenSeq& tokens);

enum class Grain { Coarse, Fine };

const char* to_string(Grain g) noexcept;

/// Learnable coarse (V) and fine (V') prompt rows plus the class-name tokens
/// they are prepended to.
struct PromptBank {
  Mat coarse;  // N x d
  Mat fine;    // N x d
  std::vector<std::string> class_names;
  std::vector<TokenSeq> class_tokens;
  std::uint64_t seed = 0;

  std::size_t prompt_length() const noexcept { return static_cast<std::size_t>(coarse.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(coarse.cols()); }
  std::size_t num_classes() const noexcept { return class_names.size(); }

  const Mat& rows(Grain g) const noexcept { return g == Grain::Coarse ? coarse : fine; }
  Mat& rows(Grain g) noexcept { return g == Grain::Coarse ? coarse : fine; }

  /// FNV-1a over prompt rows and class names.
  std::uint64_t checksum() const noexcept;

  bool operator==(const PromptBank& other) const;
};

/// Same prompt rows, new class list (tokenized with `bucket_count`).
PromptBank with_classes(const PromptBank& bank, const std::vector<std::string>& class_names,
                        std::size_t bucket_count = kDefaultBucketCount);

/// Encodes [CLS] + prompt rows of `grain` + tokens of class `class_index`.
/// Only the sentence feature is produced.
EncodedText encode_class_prompt(const EncoderWeights& w, const PromptBank& bank, Grain grain,
                                std::size_t class_index, bool want_grad);

/// Same as encode_class_prompt but with explicit prompt rows and class tokens.
EncodedText encode_prompted(const EncoderWeights& w, const Mat& prompt_rows,
                            const TokenSeq& class_tokens, bool want_grad);

/// Gradient of <grad_sentence, sentence_feat> with respect to the prompt rows
/// used in the forward pass that produced `encoded`. Returns an N x d matrix.
Mat backprop_prompt(const EncoderWeights& w, const EncodedText& encoded, const Vec& grad_sentence);

/// Encodes every class of `bank` for one grain; rows of the result are u_c.
Mat encode_class_features(const EncoderWeights& w, const PromptBank& bank, Grain grain);

/// Sentence and word features of one labeled caption. These do not depend on
/// the prompts, so a corpus is encoded once and reused for every step.
struct CaptionFeatures {
  Vec sentence;
  Mat words;
  Label label;
};

std::vector<CaptionFeatures> encode_captions(const EncoderWeights& w, const LabeledCorpus& corpus);

}  // namespace ptext
