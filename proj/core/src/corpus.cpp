#include "ptext/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "ptext/error.hpp"
#include "ptext/rng.hpp"

namespace ptext {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

bool is_ascii_space(unsigned char ch) {
  return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v';
}

bool is_ascii_punct(unsigned char ch) {
  return (ch >= 33 && ch <= 47) || (ch >= 58 && ch <= 64) || (ch >= 91 && ch <= 96) ||
         (ch >= 123 && ch <= 126);
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_ascii_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_ascii_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_phrase(const std::string& phrase) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start <= phrase.size()) {
    const std::size_t end = std::min(phrase.find(' ', start), phrase.size());
    if (end > start) words.push_back(phrase.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

bool contains_run(const std::vector<std::string>& words, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > words.size()) return false;
  return std::search(words.begin(), words.end(), phrase.begin(), phrase.end()) != words.end();
}

constexpr std::array<std::string_view, 8> kTemplates = {
    "[CLASS] sound in the background",
    "the sound of [CLASS]",
    "[CLASS] can be heard",
    "a recording of [CLASS]",
    "[CLASS] noise nearby",
    "someone listens to [CLASS]",
    "[CLASS] in the distance",
    "a short clip of [CLASS]",
};

constexpr std::string_view kPlaceholder = "[CLASS]";

std::string substitute(std::string_view tmpl, std::string_view class_name) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t hit = tmpl.find(kPlaceholder, pos);
    if (hit == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      return out;
    }
    out.append(tmpl.substr(pos, hit - pos));
    out.append(class_name);
    pos = hit + kPlaceholder.size();
  }
}

Label one_hot(std::size_t num_classes, std::size_t c) {
  Label label(num_classes, 0);
  label[c] = 1;
  return label;
}

}  // namespace

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char raw : text) {
    const auto ch = static_cast<unsigned char>(raw);
    if (is_ascii_space(ch)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else if (is_ascii_punct(ch)) {
      continue;
    } else if (ch >= 'A' && ch <= 'Z') {
      current.push_back(static_cast<char>(ch - 'A' + 'a'));
    } else {
      current.push_back(raw);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto& w : normalize_words(text)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

std::uint32_t token_id(std::string_view normalized_word, std::uint32_t bucket_count) noexcept {
  return static_cast<std::uint32_t>(fnv1a64(normalized_word) % bucket_count);
}

TokenSeq tokenize(std::string_view text, std::uint32_t bucket_count) {
  if (bucket_count == 0) throw Error(ErrorCode::InvalidInput, "bucket count must be positive");
  TokenSeq seq;
  seq.surface = normalize_words(text);
  if (seq.surface.empty()) {
    throw Error(ErrorCode::EmptyText, "no words left after normalizing \"" + std::string(text) + "\"");
  }
  seq.tokens.reserve(seq.surface.size());
  for (const auto& w : seq.surface) seq.tokens.push_back(token_id(w, bucket_count));
  return seq;
}

const char* to_string(TaskKind kind) noexcept {
  return kind == TaskKind::SingleLabel ? "single" : "multi";
}

TaskKind task_kind_from_string(std::string_view s) {
  if (s == "single" || s == "single_label") return TaskKind::SingleLabel;
  if (s == "multi" || s == "multi_label") return TaskKind::MultiLabel;
  throw Error(ErrorCode::InvalidInput, "unknown task kind \"" + std::string(s) + "\"");
}

SynonymDict build_synonym_dict(std::span<const std::string> class_names,
                               const std::map<std::string, std::vector<std::string>>& synonyms) {
  if (class_names.empty()) throw Error(ErrorCode::EmptyDict, "no class names given");
  SynonymDict dict;
  std::vector<std::string> normalized;
  for (const auto& name : class_names) {
    std::string norm = normalize_text(name);
    if (norm.empty()) throw Error(ErrorCode::EmptyText, "class name \"" + name + "\" is empty");
    if (std::find(normalized.begin(), normalized.end(), norm) != normalized.end()) {
      throw Error(ErrorCode::DuplicateClass, "class \"" + name + "\" collides with another class");
    }
    normalized.push_back(norm);
    dict.class_names.push_back(trim(name));
    dict.synonyms.push_back({norm});
  }
  for (const auto& [key, words] : synonyms) {
    const auto it = std::find(normalized.begin(), normalized.end(), normalize_text(key));
    if (it == normalized.end()) {
      throw Error(ErrorCode::InvalidInput, "synonyms given for unknown class \"" + key + "\"");
    }
    auto& set = dict.synonyms[static_cast<std::size_t>(it - normalized.begin())];
    for (const auto& w : words) {
      std::string norm = normalize_text(w);
      if (norm.empty()) throw Error(ErrorCode::EmptyText, "empty synonym for class \"" + key + "\"");
      set.insert(std::move(norm));
    }
  }
  return dict;
}

SynonymDict parse_synonym_json(std::string_view json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("synonym dict is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::InvalidInput, "synonym dict must be a JSON object");
  std::vector<std::string> names;
  std::map<std::string, std::vector<std::string>> synonyms;
  for (const auto& [key, value] : doc.items()) {
    if (!value.is_array()) {
      throw Error(ErrorCode::InvalidInput, "synonyms of \"" + key + "\" must be an array");
    }
    names.push_back(key);
    auto& list = synonyms[key];
    for (const auto& s : value) {
      if (!s.is_string()) {
        throw Error(ErrorCode::InvalidInput, "synonyms of \"" + key + "\" must be strings");
      }
      list.push_back(s.get<std::string>());
    }
  }
  return build_synonym_dict(names, synonyms);
}

std::vector<std::size_t> LabeledCaption::positives() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < label.size(); ++c) {
    if (label[c] != 0) out.push_back(c);
  }
  return out;
}

void validate_labels(const LabeledCorpus& corpus) {
  const std::size_t num_classes = corpus.num_classes();
  for (std::size_t m = 0; m < corpus.captions.size(); ++m) {
    const auto& label = corpus.captions[m].label;
    if (label.size() != num_classes) {
      throw Error(ErrorCode::InvalidLabel,
                  "caption " + std::to_string(m) + " has a label of length " +
                      std::to_string(label.size()) + ", expected " + std::to_string(num_classes));
    }
    std::size_t ones = 0;
    for (auto v : label) {
      if (v > 1) throw Error(ErrorCode::InvalidLabel, "label entries must be 0 or 1");
      ones += v;
    }
    if (corpus.task == TaskKind::SingleLabel && ones != 1) {
      throw Error(ErrorCode::InvalidLabel,
                  "caption " + std::to_string(m) + " is not one-hot in a single-label corpus");
    }
    if (corpus.task == TaskKind::MultiLabel && ones == 0) {
      throw Error(ErrorCode::InvalidLabel, "caption " + std::to_string(m) + " has no positive class");
    }
  }
}

std::span<const std::string_view> caption_templates() noexcept { return kTemplates; }

std::vector<std::string> generate_template_captions(std::string_view class_name, std::size_t count) {
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(substitute(kTemplates[i % kTemplates.size()], class_name));
  }
  return out;
}

LabeledCorpus collect_captions(std::span<const std::string> raw, const SynonymDict& dict,
                               TaskKind task, std::size_t per_class) {
  if (dict.size() == 0) throw Error(ErrorCode::EmptyDict, "synonym dict has no classes");
  if (per_class == 0) throw Error(ErrorCode::InvalidInput, "captions per class must be at least 1");
  const std::size_t num_classes = dict.size();

  std::vector<std::vector<std::vector<std::string>>> phrases(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (normalize_text(dict.class_names[c]).empty()) {
      throw Error(ErrorCode::NoCaptionsForClass, "class " + std::to_string(c) + " has an empty name");
    }
    for (const auto& s : dict.synonyms[c]) phrases[c].push_back(split_phrase(s));
  }

  LabeledCorpus corpus;
  corpus.class_names = dict.class_names;
  corpus.task = task;
  std::vector<std::size_t> counts(num_classes, 0);

  for (const auto& line : raw) {
    const auto words = normalize_words(line);
    if (words.empty()) continue;
    std::vector<std::size_t> matched;
    for (std::size_t c = 0; c < num_classes; ++c) {
      const bool hit = std::any_of(phrases[c].begin(), phrases[c].end(),
                                   [&](const auto& p) { return contains_run(words, p); });
      if (hit) matched.push_back(c);
    }
    if (matched.empty()) continue;
    if (task == TaskKind::SingleLabel && matched.size() > 1) continue;
    // A caption is kept only while every class it mentions still has room, so
    // no class ever exceeds the cap.
    const bool room = std::all_of(matched.begin(), matched.end(),
                                  [&](std::size_t c) { return counts[c] < per_class; });
    if (!room) continue;
    Label label(num_classes, 0);
    for (auto c : matched) {
      label[c] = 1;
      ++counts[c];
    }
    corpus.captions.push_back({trim(line), std::move(label), CaptionSource::Collected});
  }

  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] >= per_class) continue;
    for (auto& text : generate_template_captions(dict.class_names[c], per_class - counts[c])) {
      corpus.captions.push_back({std::move(text), one_hot(num_classes, c), CaptionSource::Template});
    }
  }
  return corpus;
}

std::pair<LabeledCorpus, LabeledCorpus> split_corpus(const LabeledCorpus& corpus,
                                                     double held_out_fraction, std::uint64_t seed) {
  if (!(held_out_fraction > 0.0 && held_out_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidInput, "held-out fraction must lie strictly between 0 and 1");
  }
  validate_labels(corpus);
  const std::size_t num_classes = corpus.num_classes();

  std::vector<std::size_t> class_totals(num_classes, 0);
  std::vector<std::vector<std::size_t>> strata(num_classes);
  for (std::size_t m = 0; m < corpus.captions.size(); ++m) {
    const auto pos = corpus.captions[m].positives();
    for (auto c : pos) ++class_totals[c];
    strata[pos.front()].push_back(m);
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (class_totals[c] < 2) {
      throw Error(ErrorCode::ClassTooSmall, "class \"" + corpus.class_names[c] + "\" has " +
                                                std::to_string(class_totals[c]) +
                                                " caption(s); at least 2 are needed to split");
    }
  }

  std::vector<bool> held(corpus.captions.size(), false);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto& members = strata[c];
    if (members.size() < 2) continue;
    auto k = static_cast<std::size_t>(std::lround(held_out_fraction * static_cast<double>(members.size())));
    k = std::clamp<std::size_t>(k, 1, members.size() - 1);
    std::vector<std::size_t> eligible;
    for (auto m : members) {
      if (corpus.captions[m].source == CaptionSource::Collected) eligible.push_back(m);
    }
    k = std::min(k, eligible.size());
    // Partial Fisher-Yates over the eligible captions.
    CounterRng rng(seed, "split", c);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.next_below(eligible.size() - i));
      std::swap(eligible[i], eligible[j]);
      held[eligible[i]] = true;
    }
  }

  LabeledCorpus train{{}, corpus.class_names, corpus.task};
  LabeledCorpus held_out{{}, corpus.class_names, corpus.task};
  for (std::size_t m = 0; m < corpus.captions.size(); ++m) {
    (held[m] ? held_out : train).captions.push_back(corpus.captions[m]);
  }
  return {std::move(train), std::move(held_out)};
}

std::vector<std::string> read_raw_captions(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

void write_corpus_jsonl(std::ostream& out, const LabeledCorpus& corpus) {
  json header;
  header["classes"] = corpus.class_names;
  header["task"] = to_string(corpus.task);
  out << header.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  for (const auto& cap : corpus.captions) {
    json rec;
    rec["text"] = cap.text;
    rec["labels"] = cap.positives();
    rec["source"] = cap.source == CaptionSource::Collected ? "collected" : "template";
    out << rec.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

LabeledCorpus read_corpus_jsonl(std::istream& in) {
  LabeledCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidInput,
                  "corpus line " + std::to_string(line_no) + " is not valid JSON: " + e.what());
    }
    try {
      if (!have_header) {
        corpus.class_names = rec.at("classes").get<std::vector<std::string>>();
        corpus.task = task_kind_from_string(rec.at("task").get<std::string>());
        if (corpus.class_names.empty()) throw Error(ErrorCode::EmptyDict, "corpus header lists no classes");
        have_header = true;
        continue;
      }
      LabeledCaption cap;
      cap.text = rec.at("text").get<std::string>();
      cap.label.assign(corpus.num_classes(), 0);
      for (const auto& idx : rec.at("labels")) {
        const auto c = idx.get<long long>();
        if (c < 0 || static_cast<std::size_t>(c) >= corpus.num_classes()) {
          throw Error(ErrorCode::InvalidLabel,
                      "corpus line " + std::to_string(line_no) + " has out-of-range label " + std::to_string(c));
        }
        cap.label[static_cast<std::size_t>(c)] = 1;
      }
      const auto source = rec.value("source", std::string("collected"));
      if (source == "collected") {
        cap.source = CaptionSource::Collected;
      } else if (source == "template") {
        cap.source = CaptionSource::Template;
      } else {
        throw Error(ErrorCode::InvalidInput, "corpus line " + std::to_string(line_no) + " has unknown source");
      }
      corpus.captions.push_back(std::move(cap));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidInput,
                  "corpus line " + std::to_string(line_no) + " is malformed: " + e.what());
    }
  }
  if (!have_header) throw Error(ErrorCode::InvalidInput, "corpus file has no header record");
  validate_labels(corpus);
  return corpus;
}

}  // namespace ptext
