#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "authlm/corpus.hpp"
#include "authlm/eval.hpp"
#include "authlm/hypersearch.hpp"
#include "authlm/nnlm.hpp"

namespace authlm {

struct AuthorSource {
  std::string id;
  std::filesystem::path path;

  friend bool operator==(const AuthorSource&, const AuthorSource&) = default;
};

struct EvalSettings {
  std::size_t s_min = 1;
  std::size_t s_max = 20;
  std::size_t trials = 100;
  std::size_t confusion_trials = 100;
  std::uint64_t seed = 1;
  OovPolicy oov = OovPolicy::kSpread;
  // Model kinds that get accuracy curves and confusion matrices; empty
  // means every trained kind.
  std::vector<std::string> kinds;

  friend bool operator==(const EvalSettings&, const EvalSettings&) = default;
};

struct ExperimentConfig {
  std::vector<AuthorSource> authors;
  bool phrase_per_line = false;
  std::size_t max_sentences = 0;  // per author, document order; 0 keeps all
  PruningRule pruning;
  std::vector<std::vector<std::string>> alias_groups;
  std::vector<std::uint64_t> seeds;  // one per segmentation
  bool train_nnlm = true;
  NnlmConfig nnlm;
  SearchSpace search;
  std::vector<std::size_t> ngram_orders{1, 2, 3, 4};
  // Per-order count cutoffs for the explicit n-gram tables (SRILM's
  // defaults); an empty list keeps every n-gram.
  std::vector<std::uint64_t> ngram_min_counts{1, 1, 2, 2};
  EvalSettings eval;
  std::filesystem::path output_dir;

  /// Throws Error(kInvalidArgument) on the first violated constraint.
  void validate() const;

  /// "nnlm" (when enabled) followed by "ngram-<k>" per order.
  std::vector<std::string> model_kinds() const;

  /// First scored position shared by every model kind in comparisons.
  std::size_t align_order() const;
};

/// Relative paths inside `j` are resolved against `base_dir`. Missing keys
/// take their defaults; n_segmentations (default 10) generates seeds 1..n
/// unless "seeds" is given.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Every field with defaults resolved and paths made absolute, so the echo
/// can be re-run from anywhere.
nlohmann::json to_json(const ExperimentConfig& config);

/// File naming inside the output directory.
class OutputLayout {
 public:
  explicit OutputLayout(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path effective_config() const { return root_ / "effective_config.json"; }
  std::filesystem::path corpus_dir() const { return root_ / "corpus"; }
  std::filesystem::path models_dir() const { return root_ / "models"; }
  std::filesystem::path logs_dir() const { return root_ / "logs"; }
  std::filesystem::path search_dir() const { return root_ / "search"; }
  std::filesystem::path report_dir() const { return root_ / "report"; }

  std::filesystem::path stems(const std::string& author) const;
  std::filesystem::path encoded(const std::string& author, std::uint64_t seed) const;
  std::filesystem::path stats() const { return corpus_dir() / "stats.csv"; }
  std::filesystem::path vocab(const std::string& author) const;
  std::filesystem::path model(const std::string& author, std::uint64_t seed,
                              const std::string& kind) const;
  std::filesystem::path history(const std::string& author, std::uint64_t seed) const;
  std::filesystem::path search_trace(const std::string& author) const;
  std::filesystem::path search_best(const std::string& author) const;

 private:
  std::filesystem::path root_;
};

/// Returns the n-gram order of a "ngram-<k>" kind, or 0 for other kinds.
std::size_t ngram_order_of(std::string_view kind);

using LogSink = std::function<void(std::string_view)>;

struct RunOptions {
  std::size_t jobs = 1;
  bool search = false;  // train: run the hyperparameter search first
  bool arpa = false;    // train: also write ARPA files for n-gram models
  LogSink log;
};

void run_prepare(const ExperimentConfig& config, const RunOptions& options = {});
void run_train(const ExperimentConfig& config, const RunOptions& options = {});

/// Per-author search on the first segmentation seed; writes the trace CSV
/// and the chosen configuration. Returns the chosen config per author.
std::vector<NnlmConfig> run_search(const ExperimentConfig& config, const RunOptions& options = {});

/// Writes perplexity_table.csv, accuracy_curve.csv, confusion.csv,
/// summary.json and trials.json; returns the summary.
nlohmann::json run_evaluate(const ExperimentConfig& config, const RunOptions& options = {});

struct ClassifyRequest {
  std::filesystem::path models_dir;
  std::string kind = "nnlm";
  OovPolicy oov = OovPolicy::kSpread;
  std::optional<std::uint64_t> seed;  // smallest available when absent
};

struct ClassifyOutcome {
  std::string kind;
  std::uint64_t seed = 0;
  ClassificationTrial trial;
};

/// Loads every author's model of one kind and seed plus its vocabulary,
/// prepares `text` and classifies it. Throws Error(kNoScoreable) when no
/// candidate can score any word.
ClassifyOutcome run_classify(const ClassifyRequest& request, std::string_view text);

}  // namespace authlm
