#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace authlm {

using TokenId = std::uint32_t;
using Sentence = std::vector<TokenId>;
using StemmedSentence = std::vector<std::string>;

inline constexpr std::string_view kOovToken = "<unk>";

struct RawDocument {
  std::string author_id;
  std::string text;
};

/// Reads `path` as one author's document. With `phrase_per_line`, every
/// line is treated as a transcript phrase and the lines are joined by a
/// single space before segmentation.
RawDocument load_document(const std::filesystem::path& path, std::string author_id,
                          bool phrase_per_line = false);

/// Splits on '.', '?' or '!' followed by whitespace or end of text. The
/// rule is deliberately naive: "e.g. x" yields two sentences.
std::vector<std::string> segment_sentences(std::string_view text);
std::vector<std::string> segment_sentences(const RawDocument& doc);

/// Lowercased maximal ASCII-alphanumeric runs; everything else separates.
std::vector<std::string> tokenize(std::string_view sentence);

/// tokenize() followed by Porter stemming; tokens containing a digit are
/// passed through unstemmed.
StemmedSentence tokenize_and_stem(std::string_view sentence);

struct PruningRule {
  std::size_t min_count = 2;
  double min_frequency = 1e-5;
};

class Vocabulary {
 public:
  Vocabulary() = default;

  /// Stems survive iff count >= rule.min_count and count/total >=
  /// rule.min_frequency. Survivors are ordered by descending count with a
  /// lexicographic tie-break; the OOV token is appended last.
  /// Throws Error(kData, "degenerate vocabulary") when fewer than two
  /// stems survive.
  static Vocabulary build(std::span<const StemmedSentence> corpus, PruningRule rule = {});

  /// Validates and adopts an explicit entry list (deserialization).
  static Vocabulary from_entries(std::vector<std::string> entries, TokenId oov_index,
                                 std::size_t oov_types = 1);

  std::size_t size() const { return entries_.size(); }
  TokenId oov_index() const { return oov_index_; }
  /// Number of distinct stems the OOV token absorbed when the vocabulary
  /// was built (at least 1).
  std::size_t oov_types() const { return oov_types_; }
  const std::vector<std::string>& entries() const { return entries_; }
  const std::string& word(TokenId id) const { return entries_.at(id); }

  /// Unknown stems map to oov_index().
  TokenId index_of(std::string_view stem) const;
  bool contains(std::string_view stem) const;

  Sentence encode(const StemmedSentence& sentence) const;
  StemmedSentence decode(std::span<const TokenId> sentence) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.entries_ == b.entries_ && a.oov_index_ == b.oov_index_ && a.oov_types_ == b.oov_types_;
  }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId oov_index_ = 0;
  std::size_t oov_types_ = 1;
};

enum class SplitLabel : std::uint8_t { kTrain, kValid, kTest };

std::string_view to_string(SplitLabel label);
SplitLabel split_label_from_string(std::string_view s);

struct EncodedCorpus {
  std::string author_id;
  Vocabulary vocab;
  std::vector<Sentence> sentences;  // original document order
  std::vector<SplitLabel> split_labels;
  std::uint64_t seed = 0;

  /// Sentences carrying `label`, in document order.
  std::vector<Sentence> split(SplitLabel label) const;
  std::size_t count(SplitLabel label) const;
};

/// Shuffles sentence indices with a seeded RNG and assigns the first
/// floor(n/10) to validation, the next floor(n/10) to test and the rest
/// (including the rounding remainder) to training.
EncodedCorpus encode_and_split(std::string author_id,
                               std::span<const StemmedSentence> sentences,
                               const Vocabulary& vocab, std::uint64_t seed);

/// Flattened (context, target) pairs: contexts[i*(N-1) .. (i+1)*(N-1)).
struct ContextSet {
  std::size_t context_size = 0;  // N - 1
  std::vector<TokenId> contexts;
  std::vector<TokenId> targets;

  std::size_t size() const { return targets.size(); }
  std::span<const TokenId> context(std::size_t i) const {
    return {contexts.data() + i * context_size, context_size};
  }
};

/// One pair per in-sentence window of N consecutive tokens. The target is
/// the window's `target_position`-th token (1-based); the context is the
/// rest of the window in original order.
ContextSet extract_contexts(std::span<const Sentence> sentences, std::size_t n,
                            std::size_t target_position);

struct CorpusStats {
  std::string author_id;
  std::size_t n_sentences = 0;
  std::size_t n_words = 0;
  double words_per_sentence = 0.0;
  std::size_t vocab_original = 0;
  std::size_t vocab_stemmed = 0;
  std::size_t vocab_pruned = 0;  // surviving stems plus the OOV token
  std::map<std::size_t, double> coverage_topk;
  double oov_rate = 0.0;
};

/// `raw` holds the lowercased unstemmed tokens per sentence, `stemmed` the
/// same sentences after stemming. Never throws on degenerate corpora.
CorpusStats corpus_stats(std::string author_id, std::span<const StemmedSentence> raw,
                         std::span<const StemmedSentence> stemmed, PruningRule rule = {});

std::string stats_csv_header();
std::string stats_csv_row(const CorpusStats& stats);

/// Every preprocessing stage of one author document.
struct PreparedText {
  std::vector<StemmedSentence> raw_tokens;
  std::vector<StemmedSentence> stemmed;
};

/// segment -> tokenize -> stem. Sentences that contain no token are dropped.
PreparedText prepare_text(std::string_view text);

inline constexpr int kCorpusFormatVersion = 1;

nlohmann::json to_json(const EncodedCorpus& corpus);
EncodedCorpus encoded_corpus_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const nlohmann::json& j);

}  // namespace authlm
