#include "authlm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "authlm/error.hpp"

namespace authlm {

double perplexity(double sum_log10, std::size_t n_scored) {
  if (n_scored == 0) throw Error(ErrorKind::kNoScoreable, "no scoreable words");
  return std::pow(10.0, -sum_log10 / static_cast<double>(n_scored));
}

// --- scorers ----------------------------------------------------------------

namespace {

// Moves the OOV positions among those scored from the OOV token's
// probability to an equal share of it per absorbed stem.
void spread_oov(SentenceScore& score, const Vocabulary& vocab, const Sentence& encoded,
                std::size_t first_scored) {
  if (vocab.oov_types() <= 1 || score.n_scored == 0) return;
  std::size_t n_oov = 0;
  for (std::size_t i = first_scored; i < encoded.size(); ++i) {
    if (encoded[i] == vocab.oov_index()) ++n_oov;
  }
  score.sum_log10 -= static_cast<double>(n_oov) * std::log10(static_cast<double>(vocab.oov_types()));
}

class NnlmScorer final : public SentenceScorer {
 public:
  NnlmScorer(Vocabulary vocab, NnlmModel model, std::size_t align, OovPolicy oov)
      : vocab_(std::move(vocab)), model_(std::move(model)),
        align_(std::max(align, model_.config.context_size)), oov_(oov) {
    if (vocab_.size() != model_.config.vocab_size) {
      throw Error(ErrorKind::kInvalidArgument, "NNLM scorer: vocabulary size mismatch");
    }
  }
  SentenceScore score(const StemmedSentence& stems) const override {
    const auto encoded = vocab_.encode(stems);
    // dropping the first align - N words moves the first scored position to align
    const std::size_t skip = align_ - model_.config.context_size;
    auto s = encoded.size() < skip ? SentenceScore{}
                                   : sentence_log10prob(model_, std::span(encoded).subspan(skip));
    if (oov_ == OovPolicy::kSpread) spread_oov(s, vocab_, encoded, align_ - 1);
    return s;
  }

 private:
  Vocabulary vocab_;
  NnlmModel model_;
  std::size_t align_;
  OovPolicy oov_;
};

class NgramScorer final : public SentenceScorer {
 public:
  NgramScorer(Vocabulary vocab, NgramModel model, std::size_t align, OovPolicy oov)
      : vocab_(std::move(vocab)), model_(std::move(model)), align_(align), oov_(oov) {
    if (vocab_.size() != model_.vocab_size()) {
      throw Error(ErrorKind::kInvalidArgument, "n-gram scorer: vocabulary size mismatch");
    }
  }
  SentenceScore score(const StemmedSentence& stems) const override {
    const auto encoded = vocab_.encode(stems);
    auto s = sentence_log10prob(model_, encoded, ScoringMode::kComparison, align_);
    if (oov_ == OovPolicy::kSpread) {
      spread_oov(s, vocab_, encoded, (align_ == 0 ? model_.order() : align_) - 1);
    }
    return s;
  }

 private:
  Vocabulary vocab_;
  NgramModel model_;
  std::size_t align_;
  OovPolicy oov_;
};

void require_candidates(std::span<const Candidate> candidates) {
  if (candidates.empty()) throw Error(ErrorKind::kInvalidArgument, "no candidate models");
  for (const auto& c : candidates) {
    if (!c.model) throw Error(ErrorKind::kInvalidArgument, fmt::format("candidate '{}' has no model", c.author_id));
  }
}

std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

// Rows some candidate can score. Every candidate scores the same positions,
// so a sentence below the alignment length is useless to all of them.
std::vector<std::size_t> scoreable_rows(const ScoreMatrix& m) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < m.n_sentences(); ++i) {
    for (std::size_t c = 0; c < m.n_candidates(); ++c) {
      if (m.at(i, c).n_scored > 0) {
        rows.push_back(i);
        break;
      }
    }
  }
  return rows;
}

double population_std(double mean, double sum_sq, std::size_t n) {
  if (n == 0) return 0.0;
  return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean));
}

}  // namespace

std::string_view to_string(OovPolicy policy) {
  return policy == OovPolicy::kToken ? "token" : "spread";
}

OovPolicy oov_policy_from_string(std::string_view s) {
  if (s == "token") return OovPolicy::kToken;
  if (s == "spread") return OovPolicy::kSpread;
  throw Error(ErrorKind::kInvalidArgument, fmt::format("unknown OOV policy '{}'", s));
}

std::shared_ptr<const SentenceScorer> make_nnlm_scorer(Vocabulary vocab, NnlmModel model,
                                                       std::size_t align_order, OovPolicy oov) {
  return std::make_shared<NnlmScorer>(std::move(vocab), std::move(model), align_order, oov);
}

std::shared_ptr<const SentenceScorer> make_ngram_scorer(Vocabulary vocab, NgramModel model,
                                                        std::size_t align_order, OovPolicy oov) {
  return std::make_shared<NgramScorer>(std::move(vocab), std::move(model), align_order, oov);
}

// --- classification ---------------------------------------------------------

ScoreMatrix::ScoreMatrix(std::span<const StemmedSentence> sentences,
                         std::span<const Candidate> candidates)
    : n_sentences_(sentences.size()) {
  require_candidates(candidates);
  for (const auto& c : candidates) authors_.push_back(c.author_id);
  scores_.resize(n_sentences_ * authors_.size());
  for (std::size_t i = 0; i < n_sentences_; ++i) {
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      scores_[i * authors_.size() + c] = candidates[c].model->score(sentences[i]);
    }
  }
}

ClassificationTrial classify_rows(const ScoreMatrix& scores, std::span<const std::size_t> rows) {
  ClassificationTrial trial;
  trial.n_sentences = rows.size();
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_index = scores.n_candidates();
  for (std::size_t c = 0; c < scores.n_candidates(); ++c) {
    SentenceScore pooled;
    for (std::size_t r : rows) pooled += scores.at(r, c);
    const double ppl = pooled.n_scored == 0 ? std::numeric_limits<double>::infinity()
                                            : perplexity(pooled);
    trial.perplexities.emplace_back(scores.authors()[c], ppl);
    if (ppl < best || (ppl == best && best_index < scores.n_candidates() &&
                       scores.authors()[c] < scores.authors()[best_index])) {
      best = ppl;
      best_index = c;
    }
  }
  if (best_index == scores.n_candidates()) {
    throw Error(ErrorKind::kNoScoreable, "no scoreable words");
  }
  trial.predicted_author = scores.authors()[best_index];
  trial.tie = std::count_if(trial.perplexities.begin(), trial.perplexities.end(),
                            [&](const auto& p) { return p.second == best; }) > 1;
  return trial;
}

ClassificationTrial classify(std::span<const StemmedSentence> test,
                             std::span<const Candidate> candidates) {
  const ScoreMatrix scores(test, candidates);
  std::vector<std::size_t> rows(test.size());
  std::iota(rows.begin(), rows.end(), 0);
  return classify_rows(scores, rows);
}

// --- alias groups -----------------------------------------------------------

AliasGroups::AliasGroups(std::vector<std::vector<std::string>> groups) : groups_(std::move(groups)) {
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (groups_[g].size() < 2) {
      throw Error(ErrorKind::kInvalidArgument, "alias group needs at least two authors");
    }
    for (const auto& a : groups_[g]) {
      if (!group_of_.emplace(a, g).second) {
        throw Error(ErrorKind::kInvalidArgument, fmt::format("author '{}' is in two alias groups", a));
      }
    }
  }
}

bool AliasGroups::same_identity(const std::string& a, const std::string& b) const {
  if (a == b) return true;
  const auto ia = group_of_.find(a);
  const auto ib = group_of_.find(b);
  return ia != group_of_.end() && ib != group_of_.end() && ia->second == ib->second;
}

// --- accuracy curves --------------------------------------------------------

AccuracyRun run_accuracy_trials(std::span<const ScoredTestSet> test_sets, const TrialOptions& options,
                                const AliasGroups& aliases) {
  if (options.s_min < 1 || options.s_max < options.s_min || options.trials == 0) {
    throw Error(ErrorKind::kInvalidArgument, "accuracy trials: bad sentence range or trial count");
  }
  AccuracyRun run;
  for (std::size_t a = 0; a < test_sets.size(); ++a) {
    const auto& set = test_sets[a];
    if (aliases.is_aliased(set.author_id)) continue;
    const auto pool = scoreable_rows(set.scores);
    if (pool.size() < options.s_max) {
      run.warnings.push_back(fmt::format("author '{}': {} scoreable test sentences, need {}; skipped",
                                         set.author_id, pool.size(), options.s_max));
      continue;
    }
    std::vector<std::size_t> rows;
    for (std::size_t s = options.s_min; s <= options.s_max; ++s) {
      for (std::size_t t = 0; t < options.trials; ++t) {
        auto rng = trial_rng(options.seed, a, s, t);
        rows.clear();
        std::sample(pool.begin(), pool.end(), std::back_inserter(rows), s, rng);
        const auto result = classify_rows(set.scores, rows);
        run.trials.push_back({set.author_id, s, t, result.predicted_author,
                              aliases.same_identity(set.author_id, result.predicted_author)});
      }
    }
  }
  return run;
}

AccuracyRun run_accuracy_trials(std::span<const TestSet> test_sets,
                                std::span<const Candidate> candidates,
                                const TrialOptions& options, const AliasGroups& aliases) {
  require_candidates(candidates);
  std::vector<ScoredTestSet> scored;
  for (const auto& set : test_sets) {
    // aliased authors are never drawn, so skip the scoring work
    if (aliases.is_aliased(set.author_id)) {
      scored.push_back({set.author_id, ScoreMatrix({}, candidates)});
    } else {
      scored.push_back({set.author_id, ScoreMatrix(set.sentences, candidates)});
    }
  }
  return run_accuracy_trials(scored, options, aliases);
}

AccuracyCurve summarize_accuracy(std::span<const AccuracyTrial> trials) {
  struct Tally {
    std::size_t n = 0;
    std::size_t correct = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, std::map<std::size_t, Tally>> per_author;
  std::map<std::size_t, Tally> pooled;
  for (const auto& t : trials) {
    auto [it, inserted] = per_author.try_emplace(t.author_id);
    if (inserted) order.push_back(t.author_id);
    auto& cell = it->second[t.n_sentences];
    ++cell.n;
    auto& all = pooled[t.n_sentences];
    ++all.n;
    if (t.correct) {
      ++cell.correct;
      ++all.correct;
    }
  }
  auto to_points = [](const std::map<std::size_t, Tally>& tallies) {
    std::vector<CurvePoint> points;
    for (const auto& [s, tally] : tallies) {
      const double p = static_cast<double>(tally.correct) / static_cast<double>(tally.n);
      // outcomes are 0/1, so E[x^2] = p
      points.push_back({s, p, population_std(p, p * static_cast<double>(tally.n), tally.n), tally.n});
    }
    return points;
  };
  AccuracyCurve curve;
  for (const auto& a : order) curve.authors.push_back({a, to_points(per_author.at(a))});
  curve.average = {"Avg.", to_points(pooled)};
  return curve;
}

AccuracyCurve accuracy_curve(std::span<const TestSet> test_sets,
                             std::span<const Candidate> candidates, const TrialOptions& options,
                             const AliasGroups& aliases) {
  auto run = run_accuracy_trials(test_sets, candidates, options, aliases);
  auto curve = summarize_accuracy(run.trials);
  curve.warnings = std::move(run.warnings);
  return curve;
}

// --- confusion --------------------------------------------------------------

ConfusionMatrix confusion_from_counts(std::vector<std::string> authors,
                                      std::vector<std::vector<std::uint64_t>> counts,
                                      std::size_t trials_per_row) {
  const std::size_t k = authors.size();
  if (trials_per_row == 0) throw Error(ErrorKind::kInvalidArgument, "confusion: T must be positive");
  if (counts.size() != k) throw Error(ErrorKind::kInvalidArgument, "confusion: row count mismatch");
  ConfusionMatrix m;
  m.trials_per_row = trials_per_row;
  m.floor = std::log10(1.0 / static_cast<double>(trials_per_row + 1));
  m.log10_prob.assign(k, std::vector<double>(k, m.floor));
  for (std::size_t i = 0; i < k; ++i) {
    if (counts[i].size() != k) throw Error(ErrorKind::kInvalidArgument, "confusion: ragged counts");
    const auto row_total = std::accumulate(counts[i].begin(), counts[i].end(), std::uint64_t{0});
    if (row_total != 0 && row_total != trials_per_row) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("confusion: row '{}' holds {} trials, expected {}", authors[i],
                              row_total, trials_per_row));
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[i][j] > 0) {
        m.log10_prob[i][j] = std::log10(static_cast<double>(counts[i][j]) /
                                        static_cast<double>(trials_per_row));
      }
    }
  }
  m.authors = std::move(authors);
  m.counts = std::move(counts);
  return m;
}

ConfusionMatrix confusion_matrix(std::span<const ScoredTestSet> test_sets, std::size_t trials,
                                 std::uint64_t seed) {
  if (test_sets.empty()) throw Error(ErrorKind::kInvalidArgument, "confusion: no test sets");
  const std::vector<std::string> authors = test_sets.front().scores.authors();
  const std::size_t k = authors.size();
  if (k < 2) throw Error(ErrorKind::kInvalidArgument, "confusion: need at least two candidates");
  for (const auto& set : test_sets) {
    if (set.scores.authors() != authors) {
      throw Error(ErrorKind::kInvalidArgument, "confusion: test sets scored against different candidates");
    }
  }

  std::vector<std::vector<std::uint64_t>> counts(k, std::vector<std::uint64_t>(k, 0));
  for (std::size_t i = 0; i < k; ++i) {
    const auto set = std::find_if(test_sets.begin(), test_sets.end(),
                                  [&](const ScoredTestSet& t) { return t.author_id == authors[i]; });
    if (set == test_sets.end()) {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("confusion: no test set for '{}'", authors[i]));
    }
    const auto pool = scoreable_rows(set->scores);
    if (pool.empty()) {
      throw Error(ErrorKind::kNoScoreable,
                  fmt::format("confusion: author '{}' has no scoreable test sentence", authors[i]));
    }
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t t = 0; t < trials; ++t) {
      auto rng = trial_rng(seed, i, 0xC0F05E, t);
      const std::size_t row = pool[pick(rng)];
      const auto result = classify_rows(set->scores, std::span(&row, 1));
      const auto j = static_cast<std::size_t>(
          std::find(authors.begin(), authors.end(), result.predicted_author) - authors.begin());
      ++counts[i][j];
    }
  }
  return confusion_from_counts(authors, std::move(counts), trials);
}

ConfusionMatrix confusion_matrix(std::span<const TestSet> test_sets,
                                 std::span<const Candidate> candidates, std::size_t trials,
                                 std::uint64_t seed) {
  require_candidates(candidates);
  std::vector<ScoredTestSet> scored;
  for (const auto& c : candidates) {
    const auto set = std::find_if(test_sets.begin(), test_sets.end(),
                                  [&](const TestSet& t) { return t.author_id == c.author_id; });
    if (set == test_sets.end()) {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("confusion: no test set for '{}'", c.author_id));
    }
    scored.push_back({set->author_id, ScoreMatrix(set->sentences, candidates)});
  }
  return confusion_matrix(scored, trials, seed);
}

// --- JSON -------------------------------------------------------------------

nlohmann::json to_json(const ClassificationTrial& trial) {
  nlohmann::json ppl = nlohmann::json::array();
  for (const auto& [author, p] : trial.perplexities) {
    ppl.push_back({{"author", author}, {"perplexity", std::isfinite(p) ? nlohmann::json(p) : nlohmann::json()}});
  }
  return {{"true_author", trial.true_author},
          {"predicted_author", trial.predicted_author},
          {"n_sentences", trial.n_sentences},
          {"tie", trial.tie},
          {"perplexities", std::move(ppl)}};
}

nlohmann::json to_json(const AccuracyTrial& trial) {
  return {{"author", trial.author_id},
          {"n_sentences", trial.n_sentences},
          {"trial", trial.trial},
          {"predicted", trial.predicted},
          {"correct", trial.correct}};
}

}  // namespace authlm
