#include "authlm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "authlm/error.hpp"
#include "authlm/ngram.hpp"

namespace authlm {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kStemsFormatVersion = 1;

// Runs fn(0..n-1) on up to `jobs` threads. Exceptions are collected per
// index and the lowest-index one is rethrown, so failures do not depend on
// scheduling.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < std::min(jobs, n); ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

class Logger {
 public:
  explicit Logger(LogSink sink) : sink_(std::move(sink)) {}
  template <typename... Args>
  void operator()(fmt::format_string<Args...> f, Args&&... args) {
    if (!sink_) return;
    const std::string line = fmt::format(f, std::forward<Args>(args)...);
    std::lock_guard lock(mutex_);
    sink_(line);
  }

 private:
  LogSink sink_;
  std::mutex mutex_;
};

void write_text(const fs::path& path, std::string_view content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write '{}'", path.string()));
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorKind::kIo, fmt::format("write failed for '{}'", path.string()));
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot read '{}'", path.string()));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kData, fmt::format("'{}': {}", path.string(), e.what()));
  }
}

// Prefixes an error with the unit it came from, keeping its kind.
template <typename Fn>
auto with_context(const std::string& context, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("{}: {}", context, e.what()));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kData, fmt::format("{}: {}", context, e.what()));
  }
}

bool valid_author_id(const std::string& id) {
  static const std::regex re("[A-Za-z0-9_][A-Za-z0-9_.-]*");
  return std::regex_match(id, re);
}

std::vector<StemmedSentence> load_stems(const fs::path& path) {
  const json j = read_json(path);
  if (j.at("format_version").get<int>() != kStemsFormatVersion) {
    throw Error(ErrorKind::kData, fmt::format("'{}': unsupported format_version", path.string()));
  }
  return j.at("sentences").get<std::vector<StemmedSentence>>();
}

std::string model_filename(const std::string& author, std::uint64_t seed, const std::string& kind) {
  if (kind == "nnlm") return fmt::format("{}.seed{}.nnlm.bin", author, seed);
  if (ngram_order_of(kind) > 0) return fmt::format("{}.seed{}.{}.json", author, seed, kind);
  throw Error(ErrorKind::kInvalidArgument, fmt::format("unknown model kind '{}'", kind));
}

std::shared_ptr<const SentenceScorer> load_scorer(const fs::path& model_path, const std::string& kind,
                                                  Vocabulary vocab, std::size_t align, OovPolicy oov) {
  if (kind == "nnlm") return make_nnlm_scorer(std::move(vocab), load_nnlm(model_path), align, oov);
  return make_ngram_scorer(std::move(vocab), load_ngram(model_path), align, oov);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<std::string> eval_kinds(const ExperimentConfig& config) {
  return config.eval.kinds.empty() ? config.model_kinds() : config.eval.kinds;
}

}  // namespace

// --- configuration ----------------------------------------------------------

std::size_t ngram_order_of(std::string_view kind) {
  if (kind.size() == 7 && kind.starts_with("ngram-") && kind[6] >= '1' && kind[6] <= '4') {
    return static_cast<std::size_t>(kind[6] - '0');
  }
  return 0;
}

void ExperimentConfig::validate() const {
  if (authors.size() < 2) throw Error(ErrorKind::kInvalidArgument, "config: need at least two authors");
  std::set<std::string> ids;
  for (const auto& a : authors) {
    if (!valid_author_id(a.id)) {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("config: bad author id '{}'", a.id));
    }
    if (!ids.insert(a.id).second) {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("config: duplicate author '{}'", a.id));
    }
  }
  const AliasGroups groups(alias_groups);
  for (const auto& g : alias_groups) {
    for (const auto& a : g) {
      if (!ids.contains(a)) {
        throw Error(ErrorKind::kInvalidArgument, fmt::format("config: alias '{}' is not an author", a));
      }
    }
  }
  if (seeds.empty()) throw Error(ErrorKind::kInvalidArgument, "config: need at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw Error(ErrorKind::kInvalidArgument, "config: seeds must be distinct");
  }
  std::set<std::size_t> orders;
  for (std::size_t k : ngram_orders) {
    if (k < 1 || k > kMaxNgramOrder || !orders.insert(k).second) {
      throw Error(ErrorKind::kInvalidArgument, "config: ngram_orders must be distinct values in 1..4");
    }
  }
  if (ngram_min_counts.size() > kMaxNgramOrder ||
      std::any_of(ngram_min_counts.begin(), ngram_min_counts.end(), [](auto m) { return m == 0; })) {
    throw Error(ErrorKind::kInvalidArgument, "config: ngram_min_counts takes up to 4 values >= 1");
  }
  if (!train_nnlm && ngram_orders.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "config: no model kind to train");
  }
  if (train_nnlm) {
    NnlmConfig probe = nnlm;
    probe.vocab_size = std::max<std::size_t>(probe.vocab_size, 2);
    probe.validate();
    if (nnlm.target_position != nnlm.context_size) {
      throw Error(ErrorKind::kInvalidArgument,
                  "config: classification needs a next-word NNLM (target_position == context_size)");
    }
  }
  search.validate();
  if (eval.s_min < 1 || eval.s_max < eval.s_min) {
    throw Error(ErrorKind::kInvalidArgument, "config: eval sentence range must satisfy 1 <= s_min <= s_max");
  }
  if (eval.trials == 0 || eval.confusion_trials == 0) {
    throw Error(ErrorKind::kInvalidArgument, "config: eval trial counts must be positive");
  }
  const auto kinds = model_kinds();
  for (const auto& k : eval.kinds) {
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("config: eval kind '{}' is not trained", k));
    }
  }
  if (output_dir.empty()) throw Error(ErrorKind::kInvalidArgument, "config: output_dir is empty");
}

std::vector<std::string> ExperimentConfig::model_kinds() const {
  std::vector<std::string> kinds;
  if (train_nnlm) kinds.emplace_back("nnlm");
  for (std::size_t k : ngram_orders) kinds.push_back(fmt::format("ngram-{}", k));
  return ordered_kinds(std::move(kinds));
}

std::size_t ExperimentConfig::align_order() const {
  std::size_t align = train_nnlm ? nnlm.context_size : 1;
  for (std::size_t k : ngram_orders) align = std::max(align, k);
  return align;
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
  static const std::set<std::string> known = {
      "authors",      "phrase_per_line", "max_sentences", "pruning", "alias_groups",
      "n_segmentations", "seeds",        "train_nnlm",    "nnlm",    "search",
      "ngram_orders", "ngram_min_counts", "eval",  "output_dir"};
  if (!j.is_object()) throw Error(ErrorKind::kInvalidArgument, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("config: unknown key '{}'", key));
    }
  }
  auto resolve = [&](const std::string& p) { return (base_dir / p).lexically_normal(); };

  ExperimentConfig c;
  try {
    const json& authors = j.at("authors");
    if (authors.is_object()) {
      for (const auto& [id, path] : authors.items()) c.authors.push_back({id, resolve(path.get<std::string>())});
    } else {
      for (const auto& a : authors) {
        c.authors.push_back({a.at("id").get<std::string>(), resolve(a.at("path").get<std::string>())});
      }
    }
    c.phrase_per_line = j.value("phrase_per_line", c.phrase_per_line);
    c.max_sentences = j.value("max_sentences", c.max_sentences);
    if (j.contains("pruning")) {
      c.pruning.min_count = j["pruning"].value("min_count", c.pruning.min_count);
      c.pruning.min_frequency = j["pruning"].value("min_frequency", c.pruning.min_frequency);
    }
    c.alias_groups = j.value("alias_groups", c.alias_groups);
    if (j.contains("seeds")) {
      c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
      if (j.contains("n_segmentations") && j["n_segmentations"].get<std::size_t>() != c.seeds.size()) {
        throw Error(ErrorKind::kInvalidArgument, "config: n_segmentations disagrees with seeds");
      }
    } else {
      const auto n = j.value("n_segmentations", std::size_t{10});
      for (std::size_t s = 1; s <= n; ++s) c.seeds.push_back(s);
    }
    c.train_nnlm = j.value("train_nnlm", c.train_nnlm);
    if (j.contains("nnlm")) c.nnlm = nnlm_config_from_json(j["nnlm"], c.nnlm);
    if (j.contains("search")) c.search = search_space_from_json(j["search"], c.search);
    c.ngram_orders = j.value("ngram_orders", c.ngram_orders);
    c.ngram_min_counts = j.value("ngram_min_counts", c.ngram_min_counts);
    if (j.contains("eval")) {
      const json& e = j["eval"];
      for (const auto& [key, value] : e.items()) {
        static const std::set<std::string> eval_keys = {"s_min", "s_max", "trials",
                                                        "confusion_trials", "seed", "kinds",
                                                        "oov_policy"};
        if (!eval_keys.contains(key)) {
          throw Error(ErrorKind::kInvalidArgument, fmt::format("config: unknown eval key '{}'", key));
        }
      }
      c.eval.s_min = e.value("s_min", c.eval.s_min);
      c.eval.s_max = e.value("s_max", c.eval.s_max);
      c.eval.trials = e.value("trials", c.eval.trials);
      c.eval.confusion_trials = e.value("confusion_trials", c.eval.confusion_trials);
      c.eval.seed = e.value("seed", c.eval.seed);
      c.eval.kinds = e.value("kinds", c.eval.kinds);
      if (e.contains("oov_policy")) c.eval.oov = oov_policy_from_string(e["oov_policy"].get<std::string>());
    }
    c.output_dir = resolve(j.value("output_dir", std::string("out")));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("config: {}", e.what()));
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  const json j = read_json(path);
  return experiment_config_from_json(j, fs::absolute(path).parent_path());
}

json to_json(const ExperimentConfig& c) {
  json authors = json::array();
  for (const auto& a : c.authors) authors.push_back({{"id", a.id}, {"path", fs::absolute(a.path).string()}});
  json nnlm = to_json(c.nnlm);
  return {{"authors", std::move(authors)},
          {"phrase_per_line", c.phrase_per_line},
          {"max_sentences", c.max_sentences},
          {"pruning", {{"min_count", c.pruning.min_count}, {"min_frequency", c.pruning.min_frequency}}},
          {"alias_groups", c.alias_groups},
          {"n_segmentations", c.seeds.size()},
          {"seeds", c.seeds},
          {"train_nnlm", c.train_nnlm},
          {"nnlm", std::move(nnlm)},
          {"search", to_json(c.search)},
          {"ngram_orders", c.ngram_orders},
          {"ngram_min_counts", c.ngram_min_counts},
          {"eval",
           {{"s_min", c.eval.s_min},
            {"s_max", c.eval.s_max},
            {"trials", c.eval.trials},
            {"confusion_trials", c.eval.confusion_trials},
            {"seed", c.eval.seed},
            {"kinds", c.eval.kinds},
            {"oov_policy", std::string(to_string(c.eval.oov))}}},
          {"output_dir", fs::absolute(c.output_dir).string()}};
}

// --- layout -----------------------------------------------------------------

fs::path OutputLayout::stems(const std::string& author) const {
  return corpus_dir() / (author + ".stems.json");
}

fs::path OutputLayout::encoded(const std::string& author, std::uint64_t seed) const {
  return corpus_dir() / fmt::format("{}.seed{}.json", author, seed);
}

fs::path OutputLayout::vocab(const std::string& author) const {
  return models_dir() / (author + ".vocab.json");
}

fs::path OutputLayout::model(const std::string& author, std::uint64_t seed, const std::string& kind) const {
  return models_dir() / model_filename(author, seed, kind);
}

fs::path OutputLayout::history(const std::string& author, std::uint64_t seed) const {
  return logs_dir() / fmt::format("{}.seed{}.nnlm.history.json", author, seed);
}

fs::path OutputLayout::search_trace(const std::string& author) const {
  return search_dir() / (author + ".trace.csv");
}

fs::path OutputLayout::search_best(const std::string& author) const {
  return search_dir() / (author + ".best.json");
}

// --- prepare ----------------------------------------------------------------

void run_prepare(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Logger log(options.log);
  const OutputLayout out(config.output_dir);
  fs::create_directories(out.corpus_dir());
  fs::create_directories(out.models_dir());
  write_json(out.effective_config(), to_json(config));

  std::vector<CorpusStats> stats(config.authors.size());
  parallel_for(config.authors.size(), options.jobs, [&](std::size_t i) {
    const auto& author = config.authors[i];
    with_context(fmt::format("author '{}'", author.id), [&] {
      const auto doc = load_document(author.path, author.id, config.phrase_per_line);
      auto prepared = prepare_text(doc.text);
      if (config.max_sentences > 0 && prepared.stemmed.size() > config.max_sentences) {
        prepared.stemmed.resize(config.max_sentences);
        prepared.raw_tokens.resize(config.max_sentences);
      }
      stats[i] = corpus_stats(author.id, prepared.raw_tokens, prepared.stemmed, config.pruning);
      const auto vocab = Vocabulary::build(prepared.stemmed, config.pruning);
      write_json(out.stems(author.id), {{"format_version", kStemsFormatVersion},
                                        {"author_id", author.id},
                                        {"sentences", prepared.stemmed}});
      write_json(out.vocab(author.id), to_json(vocab));
      for (std::uint64_t seed : config.seeds) {
        const auto corpus = encode_and_split(author.id, prepared.stemmed, vocab, seed);
        write_text(out.encoded(author.id, seed), to_json(corpus).dump() + "\n");
      }
      log("prepared {}: {} sentences, V = {}", author.id, prepared.stemmed.size(), vocab.size());
    });
  });

  std::string csv = stats_csv_header() + "\n";
  for (const auto& s : stats) csv += stats_csv_row(s) + "\n";
  write_text(out.stats(), csv);
}

// --- search -----------------------------------------------------------------

std::vector<NnlmConfig> run_search(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Logger log(options.log);
  const OutputLayout out(config.output_dir);
  fs::create_directories(out.search_dir());
  std::vector<NnlmConfig> chosen(config.authors.size());
  const std::uint64_t seed = config.seeds.front();
  parallel_for(config.authors.size(), options.jobs, [&](std::size_t i) {
    const auto& author = config.authors[i].id;
    with_context(fmt::format("search for author '{}'", author), [&] {
      const auto corpus = encoded_corpus_from_json(read_json(out.encoded(author, seed)));
      const auto result = search(corpus, config.search, config.nnlm, config.nnlm.init_seed,
                                 [&](const SearchPoint& p) {
                                   log("search {}: stage {} E={} H={} eps={} alpha={} M={} -> ppl {:.3f}",
                                       author, p.stage, p.config.embedding_dim, p.config.hidden_units,
                                       p.config.learning_rate, p.config.momentum, p.config.batch_size,
                                       p.valid_perplexity);
                                 });
      write_text(out.search_trace(author), search_trace_csv(result));
      write_json(out.search_best(author),
                 {{"config", to_json(result.best)}, {"valid_perplexity", result.best_perplexity}});
      chosen[i] = result.best;
    });
  });
  return chosen;
}

// --- train ------------------------------------------------------------------

void run_train(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Logger log(options.log);
  const OutputLayout out(config.output_dir);
  fs::create_directories(out.models_dir());
  fs::create_directories(out.logs_dir());
  write_json(out.effective_config(), to_json(config));

  std::vector<NnlmConfig> nnlm_configs(config.authors.size(), config.nnlm);
  if (config.train_nnlm && options.search) nnlm_configs = run_search(config, options);

  struct Unit {
    std::size_t author;
    std::uint64_t seed;
    std::string kind;
  };
  std::vector<Unit> units;
  for (std::size_t a = 0; a < config.authors.size(); ++a) {
    for (std::uint64_t seed : config.seeds) {
      for (const auto& kind : config.model_kinds()) units.push_back({a, seed, kind});
    }
  }

  parallel_for(units.size(), options.jobs, [&](std::size_t u) {
    const auto& unit = units[u];
    const auto& author = config.authors[unit.author].id;
    with_context(fmt::format("author '{}', seed {}, kind {}", author, unit.seed, unit.kind), [&] {
      const auto corpus = encoded_corpus_from_json(read_json(out.encoded(author, unit.seed)));
      const auto path = out.model(author, unit.seed, unit.kind);
      if (unit.kind == "nnlm") {
        const auto result = train(corpus, nnlm_configs[unit.author]);
        save_model(result.model, path);
        write_json(out.history(author, unit.seed), to_json(result.history));
        const auto& last = result.history.epochs.back();
        log("trained {} seed {} nnlm: {} epochs, valid cost {:.4f}{}", author, unit.seed,
            result.history.epochs.size(), last.valid_cost,
            result.history.stopped_early ? " (stopped early)" : "");
      } else {
        const auto order = ngram_order_of(unit.kind);
        const auto counts = count_ngrams(corpus.split(SplitLabel::kTrain), order, corpus.vocab.size());
        const auto model = estimate_kneser_ney(counts, config.ngram_min_counts);
        save_model(model, path);
        if (options.arpa) {
          std::ostringstream arpa;
          write_arpa(model, corpus.vocab, arpa);
          write_text(fs::path(path).replace_extension(".arpa"), arpa.str());
        }
        log("trained {} seed {} {}", author, unit.seed, unit.kind);
      }
    });
  });
}

// --- evaluate ---------------------------------------------------------------

json run_evaluate(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Logger log(options.log);
  const OutputLayout out(config.output_dir);
  const auto kinds = config.model_kinds();
  const auto curve_kinds = eval_kinds(config);
  const AliasGroups aliases(config.alias_groups);
  const std::size_t n_authors = config.authors.size();

  // test sentences (as stems) and vocabularies per author
  std::vector<std::vector<StemmedSentence>> stems(n_authors);
  std::vector<Vocabulary> vocabs(n_authors);
  for (std::size_t a = 0; a < n_authors; ++a) {
    const auto& id = config.authors[a].id;
    with_context(fmt::format("author '{}'", id), [&] {
      stems[a] = load_stems(out.stems(id));
      vocabs[a] = vocabulary_from_json(read_json(out.vocab(id)));
    });
  }

  struct UnitResult {
    std::vector<PerplexityObservation> observations;
    std::vector<AccuracyTrial> trials;
    std::vector<std::string> warnings;
    std::optional<ConfusionMatrix> confusion;
  };
  struct Unit {
    std::uint64_t seed;
    std::string kind;
  };
  std::vector<Unit> units;
  for (std::uint64_t seed : config.seeds) {
    for (const auto& kind : kinds) units.push_back({seed, kind});
  }
  std::vector<UnitResult> results(units.size());

  parallel_for(units.size(), options.jobs, [&](std::size_t u) {
    const auto& [seed, kind] = units[u];
    auto& result = results[u];
    std::vector<Candidate> candidates;
    std::vector<std::shared_ptr<const SentenceScorer>> native;  // OOV as a token
    std::vector<TestSet> tests;
    for (std::size_t a = 0; a < n_authors; ++a) {
      const auto& id = config.authors[a].id;
      with_context(fmt::format("author '{}', seed {}, kind {}", id, seed, kind), [&] {
        const auto corpus = encoded_corpus_from_json(read_json(out.encoded(id, seed)));
        if (corpus.sentences.size() != stems[a].size()) {
          throw Error(ErrorKind::kData, "encoded corpus does not match the prepared sentences");
        }
        TestSet test{id, {}};
        for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
          if (corpus.split_labels[i] == SplitLabel::kTest) test.sentences.push_back(stems[a][i]);
        }
        tests.push_back(std::move(test));
        const auto path = out.model(id, seed, kind);
        native.push_back(load_scorer(path, kind, vocabs[a], config.align_order(), OovPolicy::kToken));
        candidates.push_back(
            {id, config.eval.oov == OovPolicy::kToken
                     ? native.back()
                     : load_scorer(path, kind, vocabs[a], config.align_order(), config.eval.oov)});
      });
    }

    std::vector<ScoredTestSet> scored;
    for (std::size_t a = 0; a < n_authors; ++a) {
      scored.push_back({tests[a].author_id, ScoreMatrix(tests[a].sentences, candidates)});
      SentenceScore own;
      for (const auto& sentence : tests[a].sentences) own += native[a]->score(sentence);
      const double ppl = with_context(fmt::format("author '{}', seed {}, kind {}", tests[a].author_id, seed, kind),
                                      [&] { return perplexity(own); });
      result.observations.push_back({tests[a].author_id, kind, seed, ppl, own.n_scored});
    }

    if (std::find(curve_kinds.begin(), curve_kinds.end(), kind) != curve_kinds.end()) {
      TrialOptions opts;
      opts.s_min = config.eval.s_min;
      opts.s_max = config.eval.s_max;
      opts.trials = config.eval.trials;
      opts.seed = mix_seed(config.eval.seed, seed);
      auto run = run_accuracy_trials(scored, opts, aliases);
      result.trials = std::move(run.trials);
      for (auto& w : run.warnings) result.warnings.push_back(fmt::format("seed {} {}: {}", seed, kind, w));
      result.confusion = confusion_matrix(scored, config.eval.confusion_trials, opts.seed);
    }
    log("evaluated seed {} {}", seed, kind);
  });

  // --- assemble, always in (seed, kind) order
  std::vector<PerplexityObservation> observations;
  std::vector<std::string> warnings;
  for (const auto& r : results) {
    observations.insert(observations.end(), r.observations.begin(), r.observations.end());
    warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
  }
  const auto table = compare_models(observations);

  json summary;
  summary["authors"] = table.authors;
  summary["seeds"] = config.seeds;
  summary["kinds"] = table.kinds;
  std::vector<std::string> excluded;
  for (const auto& a : config.authors) {
    if (aliases.is_aliased(a.id)) excluded.push_back(a.id);
  }
  summary["excluded_from_accuracy"] = excluded;
  for (const auto& kind : table.kinds) {
    json per_author;
    for (const auto& a : table.authors) {
      const auto& c = table.cells.at({a, kind});
      per_author[a] = {{"mean", c.mean}, {"std", c.std}};
    }
    per_author["Avg."] = {{"mean", table.average.at(kind).mean}, {"std", table.average.at(kind).std}};
    summary["perplexity"][kind] = std::move(per_author);
  }
  if (table.average.contains("nnlm") && table.average.contains("ngram-4")) {
    summary["ppl_reduction_pct"] =
        ppl_reduction_pct(table.average.at("ngram-4").mean, table.average.at("nnlm").mean);
  } else {
    summary["ppl_reduction_pct"] = nullptr;
  }

  std::vector<std::pair<std::string, AccuracyCurve>> curves;
  std::vector<std::pair<std::string, ConfusionMatrix>> confusions;
  json trial_log;
  for (const auto& kind : kinds) {
    if (std::find(curve_kinds.begin(), curve_kinds.end(), kind) == curve_kinds.end()) continue;
    std::vector<AccuracyTrial> pooled;
    std::vector<AccuracyCurve> per_seed;
    std::vector<std::vector<std::uint64_t>> counts(n_authors, std::vector<std::uint64_t>(n_authors, 0));
    std::vector<std::string> confusion_authors;
    json rows = json::array();
    json confusion_log = json::array();
    for (std::size_t u = 0; u < units.size(); ++u) {
      if (units[u].kind != kind) continue;
      const auto& r = results[u];
      pooled.insert(pooled.end(), r.trials.begin(), r.trials.end());
      per_seed.push_back(summarize_accuracy(r.trials));
      for (const auto& t : r.trials) {
        rows.push_back({units[u].seed, t.author_id, t.n_sentences, t.trial, t.predicted, t.correct});
      }
      const auto& m = *r.confusion;
      confusion_authors = m.authors;
      for (std::size_t i = 0; i < n_authors; ++i) {
        for (std::size_t j = 0; j < n_authors; ++j) counts[i][j] += m.counts[i][j];
      }
      confusion_log.push_back({{"seed", units[u].seed}, {"authors", m.authors}, {"counts", m.counts}});
    }
    auto curve = summarize_accuracy(pooled);

    // spread of the pooled-author accuracy across segmentations
    json points = json::array();
    for (const auto& p : curve.average.points) {
      std::vector<double> seed_means;
      for (const auto& c : per_seed) {
        for (const auto& q : c.average.points) {
          if (q.n_sentences == p.n_sentences) seed_means.push_back(q.mean);
        }
      }
      double mean = 0.0;
      for (double x : seed_means) mean += x;
      mean /= static_cast<double>(std::max<std::size_t>(seed_means.size(), 1));
      double ss = 0.0;
      for (double x : seed_means) ss += (x - mean) * (x - mean);
      const double across = seed_means.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(seed_means.size()));
      points.push_back({{"n_sentences", p.n_sentences},
                        {"mean", p.mean},
                        {"std", p.std},
                        {"across_seed_std", across},
                        {"trials", p.trials}});
    }
    summary["accuracy"][kind] = std::move(points);

    const std::size_t t_eff = config.eval.confusion_trials * config.seeds.size();
    auto pooled_confusion = confusion_from_counts(confusion_authors, std::move(counts), t_eff);
    summary["confusion"][kind] = {{"trials_per_row", t_eff}, {"floor", pooled_confusion.floor}};
    trial_log["accuracy"][kind] = {
        {"columns", {"seed", "author", "n_sentences", "trial", "predicted", "correct"}},
        {"rows", std::move(rows)}};
    trial_log["confusion"][kind] = std::move(confusion_log);
    curves.emplace_back(kind, std::move(curve));
    confusions.emplace_back(kind, std::move(pooled_confusion));
  }
  summary["warnings"] = warnings;
  for (const auto& w : warnings) log("warning: {}", w);

  write_text(out.report_dir() / "perplexity_table.csv", perplexity_table_csv(table));
  write_text(out.report_dir() / "accuracy_curve.csv", accuracy_curve_csv(curves));
  write_text(out.report_dir() / "confusion.csv", confusion_csv(confusions));
  write_json(out.report_dir() / "summary.json", summary);
  write_text(out.report_dir() / "trials.json", trial_log.dump() + "\n");
  return summary;
}

// --- classify ---------------------------------------------------------------

ClassifyOutcome run_classify(const ClassifyRequest& request, std::string_view text) {
  const fs::path& dir = request.models_dir;
  if (!fs::is_directory(dir)) {
    throw Error(ErrorKind::kIo, fmt::format("model directory '{}' not found", dir.string()));
  }
  // model_filename validates the kind
  const std::string probe = model_filename("x", 0, request.kind);
  const std::string suffix = probe.substr(probe.find('.', 2) + 1);  // after "x.seed0"

  std::vector<std::string> authors;
  std::map<std::string, std::set<std::uint64_t>> seeds_of;
  static const std::regex model_re(R"(^(.+)\.seed([0-9]+)\.(.+)$)");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.ends_with(".vocab.json")) authors.push_back(name.substr(0, name.size() - 11));
    std::smatch m;
    if (std::regex_match(name, m, model_re) && m[3] == suffix) {
      seeds_of[m[1]].insert(std::stoull(m[2]));
    }
  }
  std::sort(authors.begin(), authors.end());
  std::set<std::uint64_t> common;
  bool first = true;
  std::vector<std::string> usable;
  for (const auto& a : authors) {
    if (!seeds_of.contains(a)) continue;
    usable.push_back(a);
    if (first) {
      common = seeds_of[a];
      first = false;
    } else {
      std::set<std::uint64_t> both;
      std::set_intersection(common.begin(), common.end(), seeds_of[a].begin(), seeds_of[a].end(),
                            std::inserter(both, both.begin()));
      common = std::move(both);
    }
  }
  if (usable.size() < 2) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("need at least two '{}' models in '{}'", request.kind, dir.string()));
  }
  std::uint64_t seed = 0;
  if (request.seed) {
    seed = *request.seed;
    if (!common.contains(seed)) {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("no complete '{}' model set for seed {}", request.kind, seed));
    }
  } else {
    if (common.empty()) {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("no seed has a '{}' model for every author", request.kind));
    }
    seed = *common.begin();
  }

  std::vector<Candidate> candidates;
  for (const auto& a : usable) {
    with_context(fmt::format("author '{}'", a), [&] {
      auto vocab = vocabulary_from_json(read_json(dir / (a + ".vocab.json")));
      candidates.push_back({a, load_scorer(dir / model_filename(a, seed, request.kind), request.kind,
                                           std::move(vocab), 0, request.oov)});
    });
  }
  const auto prepared = prepare_text(text);
  if (prepared.stemmed.empty()) throw Error(ErrorKind::kNoScoreable, "no scoreable words");
  return {request.kind, seed, classify(prepared.stemmed, candidates)};
}

}  // namespace authlm
