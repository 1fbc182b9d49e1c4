#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "authlm/corpus.hpp"
#include "authlm/ngram.hpp"
#include "authlm/nnlm.hpp"
#include "authlm/scoring.hpp"

namespace authlm {

/// 10^(-sum_log10 / n_scored). Throws Error(kNoScoreable, "no scoreable
/// words") when n_scored is zero.
double perplexity(double sum_log10, std::size_t n_scored);
inline double perplexity(const SentenceScore& s) { return perplexity(s.sum_log10, s.n_scored); }

/// An author's language model together with the vocabulary it was trained
/// on; stems unknown to that vocabulary are scored as its OOV token.
class SentenceScorer {
 public:
  virtual ~SentenceScorer() = default;
  virtual SentenceScore score(const StemmedSentence& stems) const = 0;
};

/// How a candidate prices a word outside its vocabulary.
enum class OovPolicy {
  kToken,   // the OOV token's probability, as for any other word
  kSpread,  // the OOV token's probability shared by the vocab.oov_types() stems it absorbed
};

std::string_view to_string(OovPolicy policy);
OovPolicy oov_policy_from_string(std::string_view s);

/// `align_order` fixes the first scored position (1-based); pass the largest
/// order among the models being compared. 0 means the model's own order.
std::shared_ptr<const SentenceScorer> make_nnlm_scorer(Vocabulary vocab, NnlmModel model,
                                                       std::size_t align_order = 0,
                                                       OovPolicy oov = OovPolicy::kSpread);

std::shared_ptr<const SentenceScorer> make_ngram_scorer(Vocabulary vocab, NgramModel model,
                                                        std::size_t align_order = 0,
                                                        OovPolicy oov = OovPolicy::kSpread);

struct Candidate {
  std::string author_id;
  std::shared_ptr<const SentenceScorer> model;
};

struct ClassificationTrial {
  std::string true_author;
  std::string predicted_author;
  std::size_t n_sentences = 0;
  // One entry per candidate, in candidate order; +inf when that candidate
  // scored no word.
  std::vector<std::pair<std::string, double>> perplexities;
  bool tie = false;
};

/// Per-sentence scores of a fixed sentence list under every candidate.
class ScoreMatrix {
 public:
  ScoreMatrix(std::span<const StemmedSentence> sentences, std::span<const Candidate> candidates);

  std::size_t n_sentences() const { return n_sentences_; }
  std::size_t n_candidates() const { return authors_.size(); }
  const std::vector<std::string>& authors() const { return authors_; }
  const SentenceScore& at(std::size_t sentence, std::size_t candidate) const {
    return scores_[sentence * authors_.size() + candidate];
  }

 private:
  std::size_t n_sentences_ = 0;
  std::vector<std::string> authors_;
  std::vector<SentenceScore> scores_;
};

/// Pools log-probabilities and word counts of the selected sentences per
/// candidate and picks the minimum perplexity; ties go to the
/// lexicographically smallest author id and set `tie`.
ClassificationTrial classify_rows(const ScoreMatrix& scores, std::span<const std::size_t> rows);

ClassificationTrial classify(std::span<const StemmedSentence> test,
                             std::span<const Candidate> candidates);

struct TestSet {
  std::string author_id;
  std::vector<StemmedSentence> sentences;
};

/// Authors known to share an identity (same writer under two labels).
class AliasGroups {
 public:
  AliasGroups() = default;
  explicit AliasGroups(std::vector<std::vector<std::string>> groups);

  bool is_aliased(const std::string& author) const { return group_of_.contains(author); }
  bool same_identity(const std::string& a, const std::string& b) const;
  const std::vector<std::vector<std::string>>& groups() const { return groups_; }

 private:
  std::vector<std::vector<std::string>> groups_;
  std::map<std::string, std::size_t> group_of_;
};

struct TrialOptions {
  std::size_t s_min = 1;
  std::size_t s_max = 20;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
};

struct AccuracyTrial {
  std::string author_id;
  std::size_t n_sentences = 0;
  std::size_t trial = 0;
  std::string predicted;
  bool correct = false;
};

struct CurvePoint {
  std::size_t n_sentences = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t trials = 0;
};

struct AuthorCurve {
  std::string author_id;  // "Avg." for the pooled curve
  std::vector<CurvePoint> points;
};

struct AccuracyCurve {
  std::vector<AuthorCurve> authors;
  AuthorCurve average;
  std::vector<std::string> warnings;
};

/// A test set already scored under a fixed candidate list.
struct ScoredTestSet {
  std::string author_id;
  ScoreMatrix scores;
};

struct AccuracyRun {
  std::vector<AccuracyTrial> trials;
  std::vector<std::string> warnings;
};

/// For every non-aliased author and every s in [s_min, s_max], draws
/// `trials` sets of s test sentences without replacement and classifies
/// them. Trial RNG streams derive from (seed, author, s, trial). Authors
/// with fewer than s_max test sentences are skipped with a warning.
AccuracyRun run_accuracy_trials(std::span<const TestSet> test_sets,
                                std::span<const Candidate> candidates,
                                const TrialOptions& options, const AliasGroups& aliases = {});
AccuracyRun run_accuracy_trials(std::span<const ScoredTestSet> test_sets, const TrialOptions& options,
                                const AliasGroups& aliases = {});

/// Mean and population std of trial outcomes per (author, s), plus the
/// curve pooled over all authors.
AccuracyCurve summarize_accuracy(std::span<const AccuracyTrial> trials);

AccuracyCurve accuracy_curve(std::span<const TestSet> test_sets,
                             std::span<const Candidate> candidates, const TrialOptions& options,
                             const AliasGroups& aliases = {});

struct ConfusionMatrix {
  std::vector<std::string> authors;  // candidate order; rows and columns
  std::vector<std::vector<std::uint64_t>> counts;
  std::size_t trials_per_row = 0;
  double floor = 0.0;  // log10(1 / (T + 1))
  std::vector<std::vector<double>> log10_prob;
};

/// Builds the log10 matrix from raw counts; zero cells get the floor.
ConfusionMatrix confusion_from_counts(std::vector<std::string> authors,
                                      std::vector<std::vector<std::uint64_t>> counts,
                                      std::size_t trials_per_row);

/// Single-sentence trials: T random test sentences per true author.
ConfusionMatrix confusion_matrix(std::span<const TestSet> test_sets,
                                 std::span<const Candidate> candidates, std::size_t trials,
                                 std::uint64_t seed);
/// Rows follow the candidate order of the score matrices, which must all
/// share one candidate list.
ConfusionMatrix confusion_matrix(std::span<const ScoredTestSet> test_sets, std::size_t trials,
                                 std::uint64_t seed);

// --- reporting ---------------------------------------------------------------

struct PerplexityObservation {
  std::string author_id;
  std::string model_kind;
  std::uint64_t seed = 0;
  double perplexity = 0.0;
  std::size_t n_scored = 0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Perplexity summary: one row per author, one column per model kind,
/// cells averaged over segmentation seeds, plus an average row (mean of
/// means, mean of stds).
struct PerplexityTable {
  std::vector<std::string> authors;
  std::vector<std::string> kinds;
  std::map<std::pair<std::string, std::string>, MeanStd> cells;
  std::map<std::string, MeanStd> average;
};

/// Throws Error(kInvalidArgument) when model kinds were evaluated on
/// different seed sets for the same author.
PerplexityTable compare_models(std::span<const PerplexityObservation> observations);

/// Orders model kinds as ngram-1..ngram-4 followed by nnlm, then any other.
std::vector<std::string> ordered_kinds(std::vector<std::string> kinds);

std::string format_mean_std(const MeanStd& v);
std::string perplexity_table_csv(const PerplexityTable& table);
std::string accuracy_curve_csv(const std::vector<std::pair<std::string, AccuracyCurve>>& curves);
std::string confusion_csv(const std::vector<std::pair<std::string, ConfusionMatrix>>& matrices);

/// (baseline - model) / baseline * 100.
double ppl_reduction_pct(double baseline_ppl, double model_ppl);

nlohmann::json to_json(const ClassificationTrial& trial);
nlohmann::json to_json(const AccuracyTrial& trial);

}  // namespace authlm
