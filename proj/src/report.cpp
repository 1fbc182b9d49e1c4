#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "authlm/error.hpp"
#include "authlm/eval.hpp"

namespace authlm {
namespace {

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return out;
}

int kind_rank(const std::string& kind) {
  if (kind.starts_with("ngram-") && kind.size() == 7 && kind[6] >= '1' && kind[6] <= '4') {
    return kind[6] - '1';
  }
  return kind == "nnlm" ? 4 : 5;
}

}  // namespace

std::vector<std::string> ordered_kinds(std::vector<std::string> kinds) {
  std::sort(kinds.begin(), kinds.end(), [](const std::string& a, const std::string& b) {
    const int ra = kind_rank(a);
    const int rb = kind_rank(b);
    return ra != rb ? ra < rb : a < b;
  });
  kinds.erase(std::unique(kinds.begin(), kinds.end()), kinds.end());
  return kinds;
}

PerplexityTable compare_models(std::span<const PerplexityObservation> observations) {
  PerplexityTable table;
  std::map<std::pair<std::string, std::string>, std::map<std::uint64_t, double>> by_cell;
  std::vector<std::string> kinds;
  for (const auto& o : observations) {
    if (std::find(table.authors.begin(), table.authors.end(), o.author_id) == table.authors.end()) {
      table.authors.push_back(o.author_id);
    }
    kinds.push_back(o.model_kind);
    if (!by_cell[{o.author_id, o.model_kind}].emplace(o.seed, o.perplexity).second) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("duplicate perplexity for author '{}', kind '{}', seed {}", o.author_id,
                              o.model_kind, o.seed));
    }
  }
  table.kinds = ordered_kinds(std::move(kinds));

  for (const auto& author : table.authors) {
    std::set<std::uint64_t> reference;
    bool first = true;
    for (const auto& kind : table.kinds) {
      const auto it = by_cell.find({author, kind});
      std::set<std::uint64_t> seeds;
      if (it != by_cell.end()) {
        for (const auto& [seed, ppl] : it->second) seeds.insert(seed);
      }
      if (first) {
        reference = seeds;
        first = false;
      } else if (seeds != reference) {
        throw Error(ErrorKind::kInvalidArgument,
                    fmt::format("author '{}': model kinds were evaluated on different seed sets",
                                author));
      }
      std::vector<double> values;
      if (it != by_cell.end()) {
        for (const auto& [seed, ppl] : it->second) values.push_back(ppl);
      }
      table.cells[{author, kind}] = mean_std(values);
    }
  }

  for (const auto& kind : table.kinds) {
    MeanStd avg;
    for (const auto& author : table.authors) {
      const auto& c = table.cells.at({author, kind});
      avg.mean += c.mean;
      avg.std += c.std;
    }
    if (!table.authors.empty()) {
      avg.mean /= static_cast<double>(table.authors.size());
      avg.std /= static_cast<double>(table.authors.size());
    }
    table.average[kind] = avg;
  }
  return table;
}

std::string format_mean_std(const MeanStd& v) { return fmt::format("{:.1f} ± {:.1f}", v.mean, v.std); }

std::string perplexity_table_csv(const PerplexityTable& table) {
  std::string out = "author";
  for (const auto& k : table.kinds) out += "," + k;
  out += '\n';
  for (const auto& a : table.authors) {
    out += a;
    for (const auto& k : table.kinds) out += "," + format_mean_std(table.cells.at({a, k}));
    out += '\n';
  }
  out += "Avg.";
  for (const auto& k : table.kinds) out += "," + format_mean_std(table.average.at(k));
  out += '\n';
  return out;
}

std::string accuracy_curve_csv(const std::vector<std::pair<std::string, AccuracyCurve>>& curves) {
  std::string out = "author,model_kind,n_sentences,mean,std\n";
  auto emit = [&](const AuthorCurve& c, const std::string& kind) {
    for (const auto& p : c.points) {
      out += fmt::format("{},{},{},{:.6f},{:.6f}\n", c.author_id, kind, p.n_sentences, p.mean, p.std);
    }
  };
  for (const auto& [kind, curve] : curves) {
    for (const auto& a : curve.authors) emit(a, kind);
    emit(curve.average, kind);
  }
  return out;
}

std::string confusion_csv(const std::vector<std::pair<std::string, ConfusionMatrix>>& matrices) {
  std::string out = "model_kind,true,predicted,log10_prob\n";
  for (const auto& [kind, m] : matrices) {
    for (std::size_t i = 0; i < m.authors.size(); ++i) {
      for (std::size_t j = 0; j < m.authors.size(); ++j) {
        out += fmt::format("{},{},{},{:.6f}\n", kind, m.authors[i], m.authors[j], m.log10_prob[i][j]);
      }
    }
  }
  return out;
}

double ppl_reduction_pct(double baseline_ppl, double model_ppl) {
  if (!(baseline_ppl > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "ppl_reduction_pct: baseline must be positive");
  }
  return (baseline_ppl - model_ppl) / baseline_ppl * 100.0;
}

}  // namespace authlm
