#include "authlm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>

#include "authlm/error.hpp"
#include "authlm/porter.hpp"

namespace authlm {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::isalnum(u) != 0;
}
bool is_terminal(char c) { return c == '.' || c == '?' || c == '!'; }

std::string stem_token(std::string token) {
  const bool numeric = std::any_of(token.begin(), token.end(),
                                   [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  return numeric ? token : porter_stem(token);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::unordered_map<std::string, std::size_t> count_stems(
    std::span<const StemmedSentence> corpus, std::size_t* total) {
  std::unordered_map<std::string, std::size_t> counts;
  std::size_t n = 0;
  for (const auto& sentence : corpus) {
    for (const auto& stem : sentence) {
      ++counts[stem];
      ++n;
    }
  }
  if (total != nullptr) *total = n;
  return counts;
}

// Surviving (stem, count) pairs, descending count then lexicographic.
std::vector<std::pair<std::string, std::size_t>> surviving_stems(
    const std::unordered_map<std::string, std::size_t>& counts, std::size_t total,
    PruningRule rule) {
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [stem, c] : counts) {
    const double freq = total == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(total);
    if (c >= rule.min_count && freq >= rule.min_frequency) kept.emplace_back(stem, c);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return kept;
}

}  // namespace

RawDocument load_document(const std::filesystem::path& path, std::string author_id,
                          bool phrase_per_line) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot read '{}'", path.string()));
  std::string text;
  if (phrase_per_line) {
    std::string line;
    while (std::getline(in, line)) {
      const auto phrase = trim(line);
      if (phrase.empty()) continue;
      if (!text.empty()) text += ' ';
      text += phrase;
    }
  } else {
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  if (trim(text).empty()) {
    throw Error(ErrorKind::kData, fmt::format("author '{}': empty document", author_id));
  }
  return {std::move(author_id), std::move(text)};
}

std::vector<std::string> segment_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_terminal(text[i])) continue;
    if (i + 1 < text.size() && !is_space(text[i + 1])) continue;
    const auto sentence = trim(text.substr(start, i + 1 - start));
    if (!sentence.empty()) out.emplace_back(sentence);
    start = i + 1;
  }
  if (start < text.size()) {
    const auto tail = trim(text.substr(start));
    if (!tail.empty()) out.emplace_back(tail);
  }
  return out;
}

std::vector<std::string> segment_sentences(const RawDocument& doc) {
  return segment_sentences(doc.text);
}

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : sentence) {
    if (is_alnum(c)) {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

StemmedSentence tokenize_and_stem(std::string_view sentence) {
  auto tokens = tokenize(sentence);
  for (auto& token : tokens) token = stem_token(std::move(token));
  return tokens;
}

PreparedText prepare_text(std::string_view text) {
  PreparedText out;
  for (const auto& sentence : segment_sentences(text)) {
    auto raw = tokenize(sentence);
    if (raw.empty()) continue;
    StemmedSentence stemmed;
    stemmed.reserve(raw.size());
    for (const auto& token : raw) stemmed.push_back(stem_token(token));
    out.raw_tokens.push_back(std::move(raw));
    out.stemmed.push_back(std::move(stemmed));
  }
  return out;
}

// --- Vocabulary -------------------------------------------------------------

Vocabulary Vocabulary::build(std::span<const StemmedSentence> corpus, PruningRule rule) {
  std::size_t total = 0;
  const auto counts = count_stems(corpus, &total);
  if (total == 0) throw Error(ErrorKind::kData, "degenerate vocabulary: empty corpus");
  const auto kept = surviving_stems(counts, total, rule);
  if (kept.size() < 2) {
    throw Error(ErrorKind::kData,
                fmt::format("degenerate vocabulary: {} stem(s) survive pruning", kept.size()));
  }
  std::vector<std::string> entries;
  entries.reserve(kept.size() + 1);
  for (const auto& [stem, c] : kept) entries.push_back(stem);
  entries.emplace_back(kOovToken);
  const auto oov = static_cast<TokenId>(entries.size() - 1);
  return from_entries(std::move(entries), oov, std::max<std::size_t>(1, counts.size() - kept.size()));
}

Vocabulary Vocabulary::from_entries(std::vector<std::string> entries, TokenId oov_index,
                                    std::size_t oov_types) {
  if (oov_index >= entries.size() || entries[oov_index] != kOovToken) {
    throw Error(ErrorKind::kData, "vocabulary: oov_index does not point at the OOV token");
  }
  if (oov_types == 0) throw Error(ErrorKind::kData, "vocabulary: oov_types must be positive");
  Vocabulary v;
  v.index_.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!v.index_.emplace(entries[i], static_cast<TokenId>(i)).second) {
      throw Error(ErrorKind::kData, fmt::format("vocabulary: duplicate entry '{}'", entries[i]));
    }
  }
  v.entries_ = std::move(entries);
  v.oov_index_ = oov_index;
  v.oov_types_ = oov_types;
  return v;
}

TokenId Vocabulary::index_of(std::string_view stem) const {
  const auto it = index_.find(std::string(stem));
  return it == index_.end() ? oov_index_ : it->second;
}

bool Vocabulary::contains(std::string_view stem) const {
  return index_.find(std::string(stem)) != index_.end();
}

Sentence Vocabulary::encode(const StemmedSentence& sentence) const {
  Sentence out;
  out.reserve(sentence.size());
  for (const auto& stem : sentence) out.push_back(index_of(stem));
  return out;
}

StemmedSentence Vocabulary::decode(std::span<const TokenId> sentence) const {
  StemmedSentence out;
  out.reserve(sentence.size());
  for (TokenId id : sentence) out.push_back(word(id));
  return out;
}

// --- splitting --------------------------------------------------------------

std::string_view to_string(SplitLabel label) {
  switch (label) {
    case SplitLabel::kTrain: return "train";
    case SplitLabel::kValid: return "valid";
    case SplitLabel::kTest: return "test";
  }
  return "train";
}

SplitLabel split_label_from_string(std::string_view s) {
  if (s == "train") return SplitLabel::kTrain;
  if (s == "valid") return SplitLabel::kValid;
  if (s == "test") return SplitLabel::kTest;
  throw Error(ErrorKind::kData, fmt::format("unknown split label '{}'", s));
}

std::vector<Sentence> EncodedCorpus::split(SplitLabel label) const {
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (split_labels[i] == label) out.push_back(sentences[i]);
  }
  return out;
}

std::size_t EncodedCorpus::count(SplitLabel label) const {
  return static_cast<std::size_t>(std::count(split_labels.begin(), split_labels.end(), label));
}

EncodedCorpus encode_and_split(std::string author_id, std::span<const StemmedSentence> sentences,
                               const Vocabulary& vocab, std::uint64_t seed) {
  const std::size_t n = sentences.size();
  if (n < 10) {
    throw Error(ErrorKind::kData,
                fmt::format("author '{}': corpus too small to split ({} sentences)", author_id, n));
  }
  EncodedCorpus out;
  out.author_id = std::move(author_id);
  out.vocab = vocab;
  out.seed = seed;
  out.sentences.reserve(n);
  for (const auto& s : sentences) out.sentences.push_back(vocab.encode(s));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_held = n / 10;
  out.split_labels.assign(n, SplitLabel::kTrain);
  for (std::size_t i = 0; i < n_held; ++i) out.split_labels[order[i]] = SplitLabel::kValid;
  for (std::size_t i = n_held; i < 2 * n_held; ++i) out.split_labels[order[i]] = SplitLabel::kTest;
  return out;
}

ContextSet extract_contexts(std::span<const Sentence> sentences, std::size_t n,
                            std::size_t target_position) {
  if (n < 2 || target_position < 1 || target_position > n) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("extract_contexts: need N >= 2 and 1 <= t <= N (N={}, t={})", n,
                            target_position));
  }
  ContextSet out;
  out.context_size = n - 1;
  const std::size_t t = target_position - 1;
  for (const auto& s : sentences) {
    if (s.size() < n) continue;
    for (std::size_t start = 0; start + n <= s.size(); ++start) {
      for (std::size_t p = 0; p < n; ++p) {
        if (p == t) continue;
        out.contexts.push_back(s[start + p]);
      }
      out.targets.push_back(s[start + t]);
    }
  }
  return out;
}

// --- statistics -------------------------------------------------------------

CorpusStats corpus_stats(std::string author_id, std::span<const StemmedSentence> raw,
                         std::span<const StemmedSentence> stemmed, PruningRule rule) {
  CorpusStats st;
  st.author_id = std::move(author_id);
  st.n_sentences = stemmed.size();

  std::unordered_set<std::string> original;
  for (const auto& s : raw) original.insert(s.begin(), s.end());
  st.vocab_original = original.size();

  std::size_t total = 0;
  const auto counts = count_stems(stemmed, &total);
  st.n_words = total;
  st.vocab_stemmed = counts.size();
  st.words_per_sentence =
      st.n_sentences == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(st.n_sentences);

  const auto kept = surviving_stems(counts, total, rule);
  st.vocab_pruned = kept.size() + 1;
  std::size_t kept_tokens = 0;
  for (const auto& [stem, c] : kept) kept_tokens += c;
  st.oov_rate = total == 0 ? 0.0 : 1.0 - static_cast<double>(kept_tokens) / static_cast<double>(total);

  for (std::size_t k : {std::size_t{500}, std::size_t{1000}, std::size_t{2000}}) {
    std::size_t covered = 0;
    for (std::size_t i = 0; i < std::min(k, kept.size()); ++i) covered += kept[i].second;
    st.coverage_topk[k] =
        total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
  }
  return st;
}

std::string stats_csv_header() {
  return "author,sentences,words,words_per_sentence,vocab_original,vocab_stemmed,vocab_pruned,"
         "coverage_500,coverage_1000,coverage_2000,oov_rate";
}

std::string stats_csv_row(const CorpusStats& s) {
  return fmt::format("{},{},{},{:.2f},{},{},{},{:.4f},{:.4f},{:.4f},{:.4f}", s.author_id,
                     s.n_sentences, s.n_words, s.words_per_sentence, s.vocab_original,
                     s.vocab_stemmed, s.vocab_pruned, s.coverage_topk.at(500),
                     s.coverage_topk.at(1000), s.coverage_topk.at(2000), s.oov_rate);
}

// --- serialization ----------------------------------------------------------

nlohmann::json to_json(const Vocabulary& vocab) {
  return {{"entries", vocab.entries()},
          {"oov_index", vocab.oov_index()},
          {"oov_types", vocab.oov_types()}};
}

Vocabulary vocabulary_from_json(const nlohmann::json& j) {
  return Vocabulary::from_entries(j.at("entries").get<std::vector<std::string>>(),
                                  j.at("oov_index").get<TokenId>(),
                                  j.value("oov_types", std::size_t{1}));
}

nlohmann::json to_json(const EncodedCorpus& corpus) {
  nlohmann::json labels = nlohmann::json::array();
  for (auto l : corpus.split_labels) labels.push_back(std::string(to_string(l)));
  return {{"format_version", kCorpusFormatVersion},
          {"author_id", corpus.author_id},
          {"seed", corpus.seed},
          {"vocab", corpus.vocab.entries()},
          {"oov_index", corpus.vocab.oov_index()},
          {"oov_types", corpus.vocab.oov_types()},
          {"sentences", corpus.sentences},
          {"split_labels", std::move(labels)}};
}

EncodedCorpus encoded_corpus_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != kCorpusFormatVersion) {
    throw Error(ErrorKind::kData, "encoded corpus: unsupported format_version");
  }
  EncodedCorpus c;
  c.author_id = j.at("author_id").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.vocab = Vocabulary::from_entries(j.at("vocab").get<std::vector<std::string>>(),
                                     j.at("oov_index").get<TokenId>(),
                                     j.value("oov_types", std::size_t{1}));
  c.sentences = j.at("sentences").get<std::vector<Sentence>>();
  for (const auto& l : j.at("split_labels")) {
    c.split_labels.push_back(split_label_from_string(l.get<std::string>()));
  }
  if (c.split_labels.size() != c.sentences.size()) {
    throw Error(ErrorKind::kData, "encoded corpus: split_labels/sentences length mismatch");
  }
  for (const auto& s : c.sentences) {
    for (TokenId id : s) {
      if (id >= c.vocab.size()) throw Error(ErrorKind::kData, "encoded corpus: token index >= V");
    }
  }
  return c;
}

}  // namespace authlm
