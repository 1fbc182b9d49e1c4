#include "authlm/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "authlm/error.hpp"

namespace authlm {

// --- Gram -------------------------------------------------------------------

Gram::Gram(std::span<const TokenId> words) {
  if (words.size() > kMaxNgramOrder) {
    throw Error(ErrorKind::kInvalidArgument, "Gram: more than kMaxNgramOrder words");
  }
  std::copy(words.begin(), words.end(), ids.begin());
  size = static_cast<std::uint8_t>(words.size());
}

Gram Gram::context() const {
  Gram g = *this;
  g.ids[g.size - 1] = 0;
  --g.size;
  return g;
}

Gram Gram::suffix() const {
  Gram g;
  std::copy(ids.begin() + 1, ids.begin() + size, g.ids.begin());
  g.size = static_cast<std::uint8_t>(size - 1);
  return g;
}

Gram Gram::with(TokenId w) const {
  Gram g = *this;
  g.ids[g.size++] = w;
  return g;
}

std::size_t GramHash::operator()(const Gram& g) const noexcept {
  // FNV-1a over the used words
  std::uint64_t h = 1469598103934665603ULL ^ g.size;
  for (std::size_t i = 0; i < g.size; ++i) {
    h ^= g.ids[i];
    h *= 1099511628211ULL;
  }
  return static_cast<std::size_t>(h ^ (h >> 29));
}

// --- counting ---------------------------------------------------------------

NgramCounts count_ngrams(std::span<const Sentence> sentences, std::size_t order,
                         std::size_t vocab_size) {
  if (order < 1 || order > kMaxNgramOrder) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("n-gram order {} not in 1..4", order));
  }
  NgramCounts counts;
  counts.order = order;
  counts.vocab_size = vocab_size;
  counts.raw.resize(order);
  counts.continuation.resize(order);

  std::size_t n_tokens = 0;
  for (const auto& s : sentences) {
    for (TokenId id : s) {
      if (id >= vocab_size) throw Error(ErrorKind::kInvalidArgument, "count_ngrams: index >= V");
    }
    n_tokens += s.size();
    for (std::size_t k = 1; k <= order; ++k) {
      if (s.size() < k) break;
      for (std::size_t i = 0; i + k <= s.size(); ++i) {
        ++counts.raw[k - 1][Gram(std::span(s).subspan(i, k))];
      }
    }
  }
  if (n_tokens == 0) throw Error(ErrorKind::kData, "count_ngrams: empty training split");

  for (std::size_t k = 1; k < order; ++k) {
    auto& cont = counts.continuation[k - 1];
    for (const auto& [gram, c] : counts.raw[k]) ++cont[gram.suffix()];
  }
  return counts;
}

// --- estimation -------------------------------------------------------------

namespace {

double discount_for(const GramMap<std::uint64_t>& table) {
  std::uint64_t n1 = 0;
  std::uint64_t n2 = 0;
  for (const auto& [g, c] : table) {
    if (c == 1) ++n1;
    if (c == 2) ++n2;
  }
  if (n1 == 0 || n2 == 0) return 0.5;
  return static_cast<double>(n1) / static_cast<double>(n1 + 2 * n2);
}

struct ContextTally {
  std::uint64_t total = 0;
  std::uint64_t types = 0;
  std::uint64_t kept = 0;  // types that survive the count cutoff
};

}  // namespace

NgramModel estimate_kneser_ney(const NgramCounts& counts, std::span<const std::uint64_t> min_counts) {
  const std::size_t order = counts.order;
  const std::size_t v = counts.vocab_size;
  if (order < 1 || order > kMaxNgramOrder || counts.raw.size() != order) {
    throw Error(ErrorKind::kInvalidArgument, "estimate_kneser_ney: malformed counts");
  }
  if (v == 0) throw Error(ErrorKind::kInvalidArgument, "estimate_kneser_ney: empty vocabulary");

  NgramModel m;
  m.order_ = order;
  m.vocab_size_ = v;
  m.discounts_.assign(order, 0.5);
  m.probs_.resize(order);
  m.backoffs_.resize(order);

  auto table_for = [&](std::size_t k) -> const GramMap<std::uint64_t>& {
    return k == order ? counts.raw[k - 1] : counts.continuation[k - 1];
  };

  // unigram: undiscounted relative frequency mixed with the uniform floor
  {
    const auto& table = table_for(1);
    m.discounts_[0] = discount_for(table);
    std::uint64_t total = 0;
    for (const auto& [g, c] : table) total += c;
    m.unigram_.assign(v, kUnigramFloorWeight / static_cast<double>(v));
    if (total > 0) {
      for (const auto& [g, c] : table) {
        m.unigram_[g.ids[0]] += (1.0 - kUnigramFloorWeight) * static_cast<double>(c) /
                                static_cast<double>(total);
      }
    } else {
      std::fill(m.unigram_.begin(), m.unigram_.end(), 1.0 / static_cast<double>(v));
    }
  }

  for (std::size_t k = 2; k <= order; ++k) {
    const auto& table = table_for(k);
    const double d = discount_for(table);
    m.discounts_[k - 1] = d;

    const std::uint64_t min_count = k <= min_counts.size() ? std::max<std::uint64_t>(min_counts[k - 1], 1) : 1;
    GramMap<ContextTally> tally;
    for (const auto& [g, c] : table) {
      auto& t = tally[g.context()];
      t.total += c;
      ++t.types;
      if (c >= min_count) ++t.kept;
    }

    auto& probs = m.probs_[k - 1];
    probs.reserve(table.size());
    // seen mass under this order and under the lower-order distribution
    GramMap<std::pair<double, double>> mass;
    for (const auto& [g, c] : table) {
      if (c < min_count) continue;
      const Gram ctx = g.context();
      const auto& t = tally.at(ctx);
      const bool covers_vocab = t.kept >= v;
      const double p = covers_vocab
                           ? static_cast<double>(c) / static_cast<double>(t.total)
                           : (static_cast<double>(c) - d) / static_cast<double>(t.total);
      probs.emplace(g, p);
      auto& acc = mass[ctx];
      acc.first += p;
      acc.second += m.prob(g.last(), g.suffix().context().view());
    }

    auto& bows = m.backoffs_[k - 1];
    bows.reserve(mass.size());
    for (const auto& [ctx, acc] : mass) {
      const auto& t = tally.at(ctx);
      if (t.kept >= v) {
        bows.emplace(ctx, 1.0);
        continue;
      }
      const double numerator = t.kept == t.types
                                   ? d * static_cast<double>(t.types) / static_cast<double>(t.total)
                                   : 1.0 - acc.first;
      double denominator = 1.0 - acc.second;
      if (denominator < 1e-9) {
        // recompute the unseen lower-order mass exactly
        denominator = 0.0;
        const Gram lower_ctx = ctx.suffix();
        for (TokenId w = 0; w < v; ++w) {
          if (probs.find(ctx.with(w)) == probs.end()) denominator += m.prob(w, lower_ctx.view());
        }
      }
      bows.emplace(ctx, numerator / denominator);
    }
  }
  return m;
}

double NgramModel::prob(TokenId word, std::span<const TokenId> context) const {
  if (word >= vocab_size_) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("prob: word index {} >= V", word));
  }
  if (context.size() > order_ - 1) context = context.subspan(context.size() - (order_ - 1));
  double scale = 1.0;
  while (!context.empty()) {
    const std::size_t k = context.size() + 1;
    const Gram ctx(context);
    const auto& table = probs_[k - 1];
    if (const auto it = table.find(ctx.with(word)); it != table.end()) return scale * it->second;
    const auto& bows = backoffs_[k - 1];
    if (const auto it = bows.find(ctx); it != bows.end()) scale *= it->second;
    context = context.subspan(1);
  }
  return scale * unigram_[word];
}

SentenceScore sentence_log10prob(const NgramModel& model, std::span<const TokenId> sentence,
                                 ScoringMode mode, std::size_t align_order) {
  const std::size_t align = align_order == 0 ? model.order() : align_order;
  const std::size_t first = mode == ScoringMode::kFull ? 1 : align;
  SentenceScore score;
  score.full_mode = mode == ScoringMode::kFull;
  for (std::size_t k = first; k <= sentence.size(); ++k) {
    const std::size_t ctx_len = std::min(k - 1, model.order() - 1);
    const auto context = sentence.subspan(k - 1 - ctx_len, ctx_len);
    score.sum_log10 += std::log10(model.prob(sentence[k - 1], context));
    ++score.n_scored;
  }
  return score;
}

}  // namespace authlm
