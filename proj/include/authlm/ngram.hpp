#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "authlm/corpus.hpp"
#include "authlm/scoring.hpp"

namespace authlm {

inline constexpr std::size_t kMaxNgramOrder = 4;

/// Up to kMaxNgramOrder word indices stored inline.
struct Gram {
  std::array<TokenId, kMaxNgramOrder> ids{};
  std::uint8_t size = 0;

  Gram() = default;
  explicit Gram(std::span<const TokenId> words);

  std::span<const TokenId> view() const { return {ids.data(), size}; }
  Gram context() const;  // all but the last word
  Gram suffix() const;   // all but the first word
  TokenId last() const { return ids[size - 1]; }
  Gram with(TokenId w) const;

  friend bool operator==(const Gram&, const Gram&) = default;
  friend auto operator<=>(const Gram& a, const Gram& b) {
    return std::lexicographical_compare_three_way(a.ids.begin(), a.ids.begin() + a.size,
                                                  b.ids.begin(), b.ids.begin() + b.size);
  }
};

struct GramHash {
  std::size_t operator()(const Gram& g) const noexcept;
};

template <typename T>
using GramMap = std::unordered_map<Gram, T, GramHash>;

struct NgramCounts {
  std::size_t order = 0;
  std::size_t vocab_size = 0;
  // raw[k-1]: occurrence counts of k-grams
  std::vector<GramMap<std::uint64_t>> raw;
  // continuation[k-1] (k < order): number of distinct words preceding each
  // k-gram, computed from the raw (k+1)-grams
  std::vector<GramMap<std::uint64_t>> continuation;
};

/// Tallies k-grams for k = 1..order inside sentences only; no sentence
/// boundary tokens are inserted.
NgramCounts count_ngrams(std::span<const Sentence> sentences, std::size_t order,
                         std::size_t vocab_size);

/// Lower bound mixed into the unigram distribution: (1-w)*P + w/V.
inline constexpr double kUnigramFloorWeight = 1e-6;

class NgramModel {
 public:
  std::size_t order() const { return order_; }
  std::size_t vocab_size() const { return vocab_size_; }
  const std::vector<double>& discounts() const { return discounts_; }
  const std::vector<double>& unigram() const { return unigram_; }
  // Explicit conditional probabilities of seen k-grams, k >= 2.
  const GramMap<double>& probs(std::size_t k) const { return probs_.at(k - 1); }
  // Back-off weights of seen contexts (length k-1) at order k >= 2.
  const GramMap<double>& backoffs(std::size_t k) const { return backoffs_.at(k - 1); }

  /// Back-off resolved P(word | context); only the last order-1 context
  /// words are used.
  double prob(TokenId word, std::span<const TokenId> context) const;

  friend NgramModel estimate_kneser_ney(const NgramCounts& counts,
                                        std::span<const std::uint64_t> min_counts);
  friend NgramModel ngram_model_from_json(const nlohmann::json& j);

 private:
  std::size_t order_ = 0;
  std::size_t vocab_size_ = 0;
  std::vector<double> discounts_;
  std::vector<double> unigram_;
  std::vector<GramMap<double>> probs_;
  std::vector<GramMap<double>> backoffs_;
};

/// Back-off Kneser-Ney with one discount per order, D = n1 / (n1 + 2 n2)
/// (0.5 when n1 or n2 is zero). The highest order uses raw counts, lower
/// orders continuation counts.
///
/// `min_counts[k-1]` drops k-grams (k >= 2) counted fewer times from the
/// explicit table, as SRILM's -gtNmin does: their context totals and the
/// discount still see them, and the mass they held moves to the back-off
/// weight. Missing entries mean 1, which keeps every k-gram.
NgramModel estimate_kneser_ney(const NgramCounts& counts,
                               std::span<const std::uint64_t> min_counts = {});

inline double prob(const NgramModel& model, TokenId word, std::span<const TokenId> context) {
  return model.prob(word, context);
}

enum class ScoringMode {
  kComparison,  // only positions with a full context, like the NNLM scorer
  kFull,        // also the sentence head, with truncated contexts
};

/// In comparison mode positions k >= align_order (1-based) are scored;
/// align_order = 0 means the model order. Full mode scores every position.
SentenceScore sentence_log10prob(const NgramModel& model, std::span<const TokenId> sentence,
                                 ScoringMode mode = ScoringMode::kComparison,
                                 std::size_t align_order = 0);

/// ARPA back-off format; words are taken from `vocab`.
void write_arpa(const NgramModel& model, const Vocabulary& vocab, std::ostream& out);

inline constexpr int kNgramFormatVersion = 1;

nlohmann::json to_json(const NgramModel& model);
NgramModel ngram_model_from_json(const nlohmann::json& j);

void save_model(const NgramModel& model, const std::filesystem::path& path);
NgramModel load_ngram(const std::filesystem::path& path);

}  // namespace authlm
