#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "authlm/corpus.hpp"
#include "authlm/nnlm.hpp"

namespace authlm {

struct AxisRange {
  double lo = 0.0;
  double hi = 0.0;

  friend bool operator==(const AxisRange&, const AxisRange&) = default;
};

struct SearchSpace {
  AxisRange embedding_dim{25, 200};
  AxisRange hidden_units{100, 800};
  AxisRange learning_rate{0.05, 0.3};
  AxisRange momentum{0.8, 0.99};
  AxisRange batch_size{100, 400};
  std::size_t grid_points = 3;  // per axis and stage
  double refinement = 0.5;      // span shrink factor between stages
  std::size_t max_stages = 2;

  /// Throws Error(kInvalidArgument) naming the offending axis.
  void validate() const;

  friend bool operator==(const SearchSpace&, const SearchSpace&) = default;
};

nlohmann::json to_json(const SearchSpace& space);
SearchSpace search_space_from_json(const nlohmann::json& j, SearchSpace defaults = {});

/// Geometric grid of `points` values from lo to hi; a single value when the
/// range is degenerate. Integer axes are rounded and deduplicated.
std::vector<double> geometric_grid(AxisRange range, std::size_t points, bool integer);

/// The stage-(k+1) range around `center`: the log-span of `full` scaled by
/// `factor`, centered on `center` and clamped to `full`.
AxisRange refine_range(AxisRange full, double center, double factor);

struct SearchPoint {
  std::size_t stage = 0;  // 1-based
  NnlmConfig config;
  double valid_perplexity = 0.0;  // +inf when training diverged
  double wall_seconds = 0.0;
};

struct SearchResult {
  NnlmConfig best;
  double best_perplexity = 0.0;
  std::vector<SearchPoint> trace;  // trained points in evaluation order
};

using SearchCallback = std::function<void(const SearchPoint&)>;

/// Multi-stage grid search over the five NNLM axes, scored by validation
/// perplexity exp(mean cross-entropy). Every training uses the corpus'
/// fixed splits and init_seed = seed; configurations already evaluated in
/// an earlier stage are not retrained. Diverging points score +inf.
/// Throws Error(kDiverged) when every point diverges.
SearchResult search(const EncodedCorpus& corpus, const SearchSpace& space, const NnlmConfig& fixed,
                    std::uint64_t seed, const SearchCallback& on_point = {});

/// Same search over pre-extracted context pairs.
SearchResult search(const ContextSet& train_pairs, const ContextSet& valid_pairs,
                    const SearchSpace& space, const NnlmConfig& fixed, std::uint64_t seed,
                    const SearchCallback& on_point = {});

/// stage,embedding_dim,hidden_units,learning_rate,momentum,batch_size,valid_ppl,wall_seconds
std::string search_trace_csv(const SearchResult& result);

}  // namespace authlm
