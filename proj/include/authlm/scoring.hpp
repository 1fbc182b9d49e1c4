#pragma once

#include <cstddef>

namespace authlm {

/// Sum of log10 word probabilities over the positions a model scored.
struct SentenceScore {
  double sum_log10 = 0.0;
  std::size_t n_scored = 0;
  // Set when the head positions (fewer than order-1 context words) were
  // scored with truncated contexts.
  bool full_mode = false;

  SentenceScore& operator+=(const SentenceScore& other) {
    sum_log10 += other.sum_log10;
    n_scored += other.n_scored;
    return *this;
  }
};

}  // namespace authlm
