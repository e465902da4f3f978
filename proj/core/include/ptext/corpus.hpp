#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ptext {

inline constexpr std::uint32_t kDefaultBucketCount = 4096;

/// Token ids and normalized surface words of one piece of text.
/// Both lists always have the same length, which is at least one.
struct TokenSeq {
  std::vector<std::uint32_t> tokens;
  std::vector<std::string> surface;

  std::size_t size() const noexcept { return tokens.size(); }
  bool operator==(const TokenSeq&) const = default;
};

/// Lowercases ASCII letters, deletes ASCII punctuation and splits on
/// whitespace. Non-ASCII bytes pass through untouched.
std::vector<std::string> normalize_words(std::string_view text);

/// Joins normalize_words() with single spaces.
std::string normalize_text(std::string_view text);

std::uint32_t token_id(std::string_view normalized_word,
                       std::uint32_t bucket_count = kDefaultBucketCount) noexcept;

/// Throws Error(EmptyText) when normalization leaves no words.
TokenSeq tokenize(std::string_view text, std::uint32_t bucket_count = kDefaultBucketCount);

enum class TaskKind { SingleLabel, MultiLabel };
enum class CaptionSource { Collected, Template };

const char* to_string(TaskKind kind) noexcept;
TaskKind task_kind_from_string(std::string_view s);

/// Class names in a fixed order, each with the normalized phrases that count
/// as a mention of that class. A class's own normalized name is always one of
/// its phrases.
struct SynonymDict {
  std::vector<std::string> class_names;
  std::vector<std::set<std::string>> synonyms;

  std::size_t size() const noexcept { return class_names.size(); }
};

SynonymDict build_synonym_dict(std::span<const std::string> class_names,
                               const std::map<std::string, std::vector<std::string>>& synonyms);

/// Parses a JSON object {class_name: [synonym, ...]}. Class order follows the
/// document order.
SynonymDict parse_synonym_json(std::string_view json_text);

using Label = std::vector<std::uint8_t>;

struct LabeledCaption {
  std::string text;
  Label label;
  CaptionSource source = CaptionSource::Collected;

  std::vector<std::size_t> positives() const;
  bool operator==(const LabeledCaption&) const = default;
};

struct LabeledCorpus {
  std::vector<LabeledCaption> captions;
  std::vector<std::string> class_names;
  TaskKind task = TaskKind::SingleLabel;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  bool operator==(const LabeledCorpus&) const = default;
};

/// Throws Error(InvalidLabel) when a label vector has the wrong length or
/// violates the task's one-hot / multi-hot rule.
void validate_labels(const LabeledCorpus& corpus);

/// Built-in caption templates; "[CLASS]" is the placeholder.
std::span<const std::string_view> caption_templates() noexcept;

std::vector<std::string> generate_template_captions(std::string_view class_name, std::size_t count);

/// Assigns raw captions to classes by whole-word synonym matching, drops
/// multi-class captions for single-label tasks, caps every class at
/// `per_class` captions in input order and tops short classes up with
/// template captions.
LabeledCorpus collect_captions(std::span<const std::string> raw, const SynonymDict& dict,
                               TaskKind task, std::size_t per_class);

/// Stratified split by each caption's first positive class. Template captions
/// always stay in the training half. Both halves keep the input order.
std::pair<LabeledCorpus, LabeledCorpus> split_corpus(const LabeledCorpus& corpus,
                                                     double held_out_fraction, std::uint64_t seed);

/// One caption per non-blank line.
std::vector<std::string> read_raw_captions(std::istream& in);

// JSON Lines: line 1 is {"classes": [...], "task": "single"|"multi"}, then one
// {"labels": [...], "source": "...", "text": "..."} record per caption.
void write_corpus_jsonl(std::ostream& out, const LabeledCorpus& corpus);
LabeledCorpus read_corpus_jsonl(std::istream& in);

}  // namespace ptext
