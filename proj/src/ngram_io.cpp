#include <cmath>
#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "authlm/error.hpp"
#include "authlm/ngram.hpp"

namespace authlm {
namespace {

template <typename T>
std::vector<std::pair<Gram, T>> sorted_entries(const GramMap<T>& map) {
  std::vector<std::pair<Gram, T>> out(map.begin(), map.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::string words_of(const Gram& g, const Vocabulary& vocab) {
  std::string s;
  for (TokenId id : g.view()) {
    if (!s.empty()) s += ' ';
    s += vocab.word(id);
  }
  return s;
}

}  // namespace

void write_arpa(const NgramModel& model, const Vocabulary& vocab, std::ostream& out) {
  if (vocab.size() != model.vocab_size()) {
    throw Error(ErrorKind::kInvalidArgument, "write_arpa: vocabulary size mismatch");
  }
  const std::size_t order = model.order();

  // Every context carrying a back-off weight must itself be listed; contexts
  // that only occur sentence-initially get their back-off resolved value.
  std::vector<std::vector<std::pair<Gram, double>>> sections(order);
  for (TokenId w = 0; w < model.vocab_size(); ++w) {
    sections[0].emplace_back(Gram(std::span(&w, 1)), model.unigram()[w]);
  }
  for (std::size_t k = 2; k <= order; ++k) {
    GramMap<double> listed = model.probs(k);
    if (k < order) {
      for (const auto& [ctx, bow] : model.backoffs(k + 1)) {
        if (!listed.contains(ctx)) listed.emplace(ctx, model.prob(ctx.last(), ctx.context().view()));
      }
    }
    sections[k - 1] = sorted_entries(listed);
  }

  out << "\n\\data\\\n";
  for (std::size_t k = 1; k <= order; ++k) fmt::print(out, "ngram {}={}\n", k, sections[k - 1].size());
  for (std::size_t k = 1; k <= order; ++k) {
    fmt::print(out, "\n\\{}-grams:\n", k);
    const GramMap<double>* bows = k < order ? &model.backoffs(k + 1) : nullptr;
    for (const auto& [gram, p] : sections[k - 1]) {
      fmt::print(out, "{:.7f}\t{}", std::log10(p), words_of(gram, vocab));
      if (bows != nullptr) {
        if (const auto it = bows->find(gram); it != bows->end()) {
          fmt::print(out, "\t{:.7f}", std::log10(it->second));
        }
      }
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
}

nlohmann::json to_json(const NgramModel& model) {
  nlohmann::json orders = nlohmann::json::array();
  for (std::size_t k = 2; k <= model.order(); ++k) {
    nlohmann::json probs = nlohmann::json::array();
    for (const auto& [g, p] : sorted_entries(model.probs(k))) {
      probs.push_back({std::vector<TokenId>(g.view().begin(), g.view().end()), p});
    }
    nlohmann::json bows = nlohmann::json::array();
    for (const auto& [g, b] : sorted_entries(model.backoffs(k))) {
      bows.push_back({std::vector<TokenId>(g.view().begin(), g.view().end()), b});
    }
    orders.push_back({{"order", k}, {"probs", std::move(probs)}, {"backoffs", std::move(bows)}});
  }
  return {{"format_version", kNgramFormatVersion},
          {"order", model.order()},
          {"vocab_size", model.vocab_size()},
          {"discounts", model.discounts()},
          {"unigram", model.unigram()},
          {"orders", std::move(orders)}};
}

NgramModel ngram_model_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != kNgramFormatVersion) {
    throw Error(ErrorKind::kData, "n-gram model: unsupported format_version");
  }
  NgramModel m;
  m.order_ = j.at("order").get<std::size_t>();
  m.vocab_size_ = j.at("vocab_size").get<std::size_t>();
  if (m.order_ < 1 || m.order_ > kMaxNgramOrder) throw Error(ErrorKind::kData, "n-gram model: bad order");
  m.discounts_ = j.at("discounts").get<std::vector<double>>();
  m.unigram_ = j.at("unigram").get<std::vector<double>>();
  if (m.unigram_.size() != m.vocab_size_ || m.discounts_.size() != m.order_) {
    throw Error(ErrorKind::kData, "n-gram model: table sizes do not match the header");
  }
  m.probs_.resize(m.order_);
  m.backoffs_.resize(m.order_);
  for (const auto& o : j.at("orders")) {
    const auto k = o.at("order").get<std::size_t>();
    if (k < 2 || k > m.order_) throw Error(ErrorKind::kData, "n-gram model: bad section order");
    for (const auto& e : o.at("probs")) {
      const auto ids = e.at(0).get<std::vector<TokenId>>();
      const double p = e.at(1).get<double>();
      if (ids.size() != k || !(p > 0.0)) throw Error(ErrorKind::kData, "n-gram model: bad entry");
      m.probs_[k - 1].emplace(Gram(ids), p);
    }
    for (const auto& e : o.at("backoffs")) {
      const auto ids = e.at(0).get<std::vector<TokenId>>();
      const double b = e.at(1).get<double>();
      if (ids.size() != k - 1 || !(b > 0.0)) throw Error(ErrorKind::kData, "n-gram model: bad entry");
      m.backoffs_[k - 1].emplace(Gram(ids), b);
    }
  }
  return m;
}

void save_model(const NgramModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write '{}'", path.string()));
  out << to_json(model).dump() << '\n';
}

NgramModel load_ngram(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot read '{}'", path.string()));
  return ngram_model_from_json(nlohmann::json::parse(in));
}

}  // namespace authlm
