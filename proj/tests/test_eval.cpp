#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <doctest.h>

#include "authlm/corpus.hpp"
#include "authlm/error.hpp"
#include "authlm/eval.hpp"
#include "authlm/ngram.hpp"
#include "authlm/nnlm.hpp"

using namespace authlm;

namespace {

// Scores every word with a fixed log10 probability; sentences shorter than
// `min_len` score nothing.
class TableScorer final : public SentenceScorer {
 public:
  TableScorer(std::map<std::string, double> log10p, std::size_t min_len = 1)
      : log10p_(std::move(log10p)), min_len_(min_len) {}

  SentenceScore score(const StemmedSentence& stems) const override {
    SentenceScore s;
    if (stems.size() < min_len_) return s;
    for (const auto& w : stems) {
      s.sum_log10 += log10p_.at(w);
      ++s.n_scored;
    }
    return s;
  }

 private:
  std::map<std::string, double> log10p_;
  std::size_t min_len_;
};

Candidate table_candidate(const std::string& id, std::map<std::string, double> p,
                          std::size_t min_len = 1) {
  return {id, std::make_shared<TableScorer>(std::move(p), min_len)};
}

// Three unigram authors over six words; each test sentence is drawn from
// its author's distribution.
struct Synthetic {
  std::vector<std::string> words{"a", "b", "c", "d", "e", "f"};
  std::vector<std::vector<double>> dists{{0.30, 0.25, 0.15, 0.10, 0.10, 0.10},
                                         {0.10, 0.15, 0.30, 0.25, 0.10, 0.10},
                                         {0.15, 0.10, 0.10, 0.15, 0.25, 0.25}};
  std::vector<std::string> ids{"x", "y", "z"};

  std::vector<Candidate> candidates() const {
    std::vector<Candidate> out;
    for (std::size_t a = 0; a < ids.size(); ++a) {
      std::map<std::string, double> p;
      for (std::size_t w = 0; w < words.size(); ++w) p[words[w]] = std::log10(dists[a][w]);
      out.push_back(table_candidate(ids[a], p));
    }
    return out;
  }

  std::vector<TestSet> test_sets(std::size_t per_author, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len(3, 8);
    std::vector<TestSet> out;
    for (std::size_t a = 0; a < ids.size(); ++a) {
      std::discrete_distribution<std::size_t> pick(dists[a].begin(), dists[a].end());
      TestSet set{ids[a], {}};
      for (std::size_t i = 0; i < per_author; ++i) {
        StemmedSentence s(len(rng));
        for (auto& w : s) w = words[pick(rng)];
        set.sentences.push_back(std::move(s));
      }
      out.push_back(std::move(set));
    }
    return out;
  }
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("perplexity from pooled log probabilities") {
  CHECK(perplexity(-3.0, 2) == doctest::Approx(31.6228).epsilon(1e-5));
  CHECK(perplexity(0.0, 5) == doctest::Approx(1.0));
  try {
    perplexity(-1.0, 0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNoScoreable);
    CHECK(std::string(e.what()) == "no scoreable words");
  }
}

TEST_CASE("classification picks the lowest perplexity") {
  const std::vector<Candidate> cands{table_candidate("p", {{"w", -1.0}}),
                                     table_candidate("q", {{"w", -0.5}}),
                                     table_candidate("r", {{"w", -2.0}})};
  const std::vector<StemmedSentence> test{{"w", "w"}, {"w"}};
  const auto t = classify(test, cands);
  CHECK(t.predicted_author == "q");
  CHECK_FALSE(t.tie);
  CHECK(t.n_sentences == 2);
  REQUIRE(t.perplexities.size() == 3);
  CHECK(t.perplexities[0].first == "p");
  CHECK(t.perplexities[0].second == doctest::Approx(10.0));
  CHECK(t.perplexities[1].second == doctest::Approx(std::sqrt(10.0)));
  CHECK(t.perplexities[2].second == doctest::Approx(100.0));
}

TEST_CASE("sentences are pooled, not averaged") {
  // sentence 1: 1 word at log10 -2; sentence 2: 3 words at log10 0
  // pooled perplexity 10^(2/4), not the mean of 100 and 1
  const std::vector<Candidate> cands{table_candidate("p", {{"u", -2.0}, {"v", 0.0}}),
                                     table_candidate("q", {{"u", -0.9}, {"v", -0.9}})};
  const std::vector<StemmedSentence> test{{"u"}, {"v", "v", "v"}};
  const auto t = classify(test, cands);
  CHECK(t.perplexities[0].second == doctest::Approx(std::pow(10.0, 0.5)));
  CHECK(t.predicted_author == "p");
}

TEST_CASE("ties go to the lexicographically smallest author") {
  const std::vector<Candidate> cands{table_candidate("zeta", {{"w", -1.0}}),
                                     table_candidate("alpha", {{"w", -1.0}}),
                                     table_candidate("mid", {{"w", -3.0}})};
  const std::vector<StemmedSentence> test{{"w"}};
  const auto t = classify(test, cands);
  CHECK(t.predicted_author == "alpha");
  CHECK(t.tie);
}

TEST_CASE("candidates that score nothing") {
  const std::vector<Candidate> cands{table_candidate("long", {{"w", -0.1}}, 5),
                                     table_candidate("short", {{"w", -1.0}})};
  const std::vector<StemmedSentence> test{{"w", "w"}};
  const auto t = classify(test, cands);
  CHECK(t.predicted_author == "short");
  CHECK(std::isinf(t.perplexities[0].second));

  const std::vector<Candidate> none{table_candidate("a", {{"w", -1.0}}, 5),
                                    table_candidate("b", {{"w", -1.0}}, 5)};
  try {
    classify(test, none);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNoScoreable);
  }
  CHECK_THROWS_AS(classify(test, std::vector<Candidate>{}), Error);
}

TEST_CASE("with exact author models the classifier is the Bayes decision") {
  const Synthetic syn;
  const auto cands = syn.candidates();
  const auto sets = syn.test_sets(60, 1);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 300; ++i) {
    const auto& set = sets[rng() % sets.size()];
    std::vector<StemmedSentence> sample;
    std::sample(set.sentences.begin(), set.sentences.end(), std::back_inserter(sample),
                1 + rng() % 6, rng);
    // likelihood under each generating distribution; equal priors
    std::vector<double> loglik(syn.ids.size(), 0.0);
    for (std::size_t a = 0; a < syn.ids.size(); ++a) {
      for (const auto& s : sample) {
        for (const auto& w : s) {
          const auto idx = std::find(syn.words.begin(), syn.words.end(), w) - syn.words.begin();
          loglik[a] += std::log(syn.dists[a][static_cast<std::size_t>(idx)]);
        }
      }
    }
    const auto best = std::max_element(loglik.begin(), loglik.end()) - loglik.begin();
    CHECK(classify(sample, cands).predicted_author == syn.ids[static_cast<std::size_t>(best)]);
  }
}

TEST_CASE("accuracy trials") {
  const Synthetic syn;
  const auto cands = syn.candidates();
  const auto sets = syn.test_sets(40, 3);
  TrialOptions opt;
  opt.s_min = 1;
  opt.s_max = 10;
  opt.trials = 50;
  opt.seed = 7;

  const auto run = run_accuracy_trials(sets, cands, opt);
  CHECK(run.trials.size() == 3 * 10 * 50);
  CHECK(run.warnings.empty());

  SUBCASE("reproducible for a seed and different across seeds") {
    const auto again = run_accuracy_trials(sets, cands, opt);
    std::vector<std::string> p1, p2;
    for (const auto& t : run.trials) p1.push_back(t.predicted);
    for (const auto& t : again.trials) p2.push_back(t.predicted);
    CHECK(p1 == p2);
    auto other = opt;
    other.seed = 8;
    std::vector<std::string> p3;
    for (const auto& t : run_accuracy_trials(sets, cands, other).trials) p3.push_back(t.predicted);
    CHECK(p1 != p3);
  }

  SUBCASE("more sentences help") {
    const auto curve = summarize_accuracy(run.trials);
    REQUIRE(curve.average.points.size() == 10);
    CHECK(curve.average.author_id == "Avg.");
    CHECK(curve.average.points.front().n_sentences == 1);
    CHECK(curve.average.points.back().mean > curve.average.points.front().mean);
    CHECK(curve.average.points.back().trials == 150);
  }

  SUBCASE("aliased authors are not drawn") {
    const AliasGroups aliases(std::vector<std::vector<std::string>>{{"x", "y"}});
    const auto aliased = run_accuracy_trials(sets, cands, opt, aliases);
    CHECK(aliased.trials.size() == 10 * 50);
    for (const auto& t : aliased.trials) CHECK(t.author_id == "z");
  }

  SUBCASE("authors with too few test sentences are skipped with a warning") {
    auto small = sets;
    small[1].sentences.resize(9);
    const auto r = run_accuracy_trials(small, cands, opt);
    CHECK(r.trials.size() == 2 * 10 * 50);
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("'y'") != std::string::npos);
  }

  CHECK_THROWS_AS(run_accuracy_trials(sets, cands, TrialOptions{3, 2, 10, 1}), Error);
}

TEST_CASE("sampling pools exclude sentences no candidate can score") {
  // only sentences of length >= 3 are scoreable; each author has exactly 5
  std::vector<Candidate> cands{table_candidate("p", {{"u", -1.0}, {"v", -2.0}}, 3),
                               table_candidate("q", {{"u", -2.0}, {"v", -1.0}}, 3)};
  std::vector<TestSet> sets{{"p", {}}, {"q", {}}};
  for (int i = 0; i < 5; ++i) {
    sets[0].sentences.push_back({"u", "u", "u"});
    sets[0].sentences.push_back({"v"});
    sets[1].sentences.push_back({"v", "v", "v"});
    sets[1].sentences.push_back({"u"});
  }
  const auto run = run_accuracy_trials(sets, cands, TrialOptions{1, 5, 20, 1});
  CHECK(run.warnings.empty());
  for (const auto& t : run.trials) CHECK(t.correct);
  const auto over = run_accuracy_trials(sets, cands, TrialOptions{1, 6, 20, 1});
  CHECK(over.trials.empty());
  CHECK(over.warnings.size() == 2);
}

TEST_CASE("accuracy summary statistics") {
  const std::vector<AccuracyTrial> trials{{"a", 1, 0, "a", true},  {"a", 1, 1, "a", true},
                                          {"a", 1, 2, "b", false}, {"a", 1, 3, "a", true},
                                          {"b", 1, 0, "b", true},  {"b", 1, 1, "b", true}};
  const auto c = summarize_accuracy(trials);
  REQUIRE(c.authors.size() == 2);
  CHECK(c.authors[0].points[0].mean == doctest::Approx(0.75));
  CHECK(c.authors[0].points[0].std == doctest::Approx(std::sqrt(0.75 * 0.25)));
  CHECK(c.authors[1].points[0].std == doctest::Approx(0.0));
  CHECK(c.average.points[0].mean == doctest::Approx(5.0 / 6.0));
  CHECK(c.average.points[0].trials == 6);
}

TEST_CASE("confusion matrix") {
  const Synthetic syn;
  const auto cands = syn.candidates();
  const auto sets = syn.test_sets(30, 4);
  const auto m = confusion_matrix(sets, cands, 100, 5);
  REQUIRE(m.authors == syn.ids);
  CHECK(m.trials_per_row == 100);
  CHECK(m.floor == doctest::Approx(std::log10(1.0 / 101.0)));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::accumulate(m.counts[i].begin(), m.counts[i].end(), std::uint64_t{0}) == 100);
    double p = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      if (m.counts[i][j] > 0) p += std::pow(10.0, m.log10_prob[i][j]);
    }
    CHECK(p == doctest::Approx(1.0));
    // single sentences of these distributions still favour the true author
    CHECK(m.counts[i][i] == *std::max_element(m.counts[i].begin(), m.counts[i].end()));
  }
  CHECK(confusion_matrix(sets, cands, 100, 5).counts == m.counts);
}

TEST_CASE("confusion from counts") {
  const auto m = confusion_from_counts({"a", "b"}, {{10, 0}, {3, 7}}, 10);
  CHECK(m.log10_prob[0][0] == doctest::Approx(0.0));
  CHECK(m.log10_prob[0][1] == doctest::Approx(std::log10(1.0 / 11.0)));
  CHECK(m.log10_prob[1][0] == doctest::Approx(std::log10(0.3)));
  CHECK(m.log10_prob[1][1] == doctest::Approx(std::log10(0.7)));
  CHECK_THROWS_AS(confusion_from_counts({"a", "b"}, {{9, 0}, {3, 7}}, 10), Error);
  CHECK_THROWS_AS(confusion_from_counts({"a", "b"}, {{10, 0}}, 10), Error);
  CHECK_THROWS_AS(confusion_from_counts({"a", "b"}, {{10, 0}, {3, 7}}, 0), Error);
}

TEST_CASE("alias groups") {
  using Groups = std::vector<std::vector<std::string>>;
  const AliasGroups g(Groups{{"a1", "a2"}});
  CHECK(g.is_aliased("a1"));
  CHECK_FALSE(g.is_aliased("b"));
  CHECK(g.same_identity("a1", "a2"));
  CHECK(g.same_identity("b", "b"));
  CHECK_FALSE(g.same_identity("a1", "b"));
  CHECK_THROWS_AS(AliasGroups(Groups{{"a"}}), Error);
  CHECK_THROWS_AS(AliasGroups(Groups{{"a", "b"}, {"b", "c"}}), Error);
}

TEST_CASE("model comparison table") {
  const std::vector<PerplexityObservation> obs{
      {"ann", "nnlm", 1, 10.0, 5}, {"ann", "nnlm", 2, 12.0, 5},
      {"ann", "ngram-4", 1, 20.0, 5}, {"ann", "ngram-4", 2, 20.0, 5},
      {"bob", "nnlm", 1, 30.0, 5}, {"bob", "nnlm", 2, 30.0, 5},
      {"bob", "ngram-4", 1, 40.0, 5}, {"bob", "ngram-4", 2, 44.0, 5},
  };
  const auto t = compare_models(obs);
  CHECK(t.kinds == std::vector<std::string>{"ngram-4", "nnlm"});
  CHECK(t.authors == std::vector<std::string>{"ann", "bob"});
  CHECK(t.cells.at({"ann", "nnlm"}).mean == doctest::Approx(11.0));
  CHECK(t.cells.at({"ann", "nnlm"}).std == doctest::Approx(1.0));
  CHECK(t.average.at("nnlm").mean == doctest::Approx(20.5));
  CHECK(t.average.at("nnlm").std == doctest::Approx(0.5));
  CHECK(t.average.at("ngram-4").mean == doctest::Approx(31.0));
  CHECK(t.average.at("ngram-4").std == doctest::Approx(1.0));

  CHECK(perplexity_table_csv(t) ==
        "author,ngram-4,nnlm\n"
        "ann,20.0 ± 0.0,11.0 ± 1.0\n"
        "bob,42.0 ± 2.0,30.0 ± 0.0\n"
        "Avg.,31.0 ± 1.0,20.5 ± 0.5\n");

  auto mismatch = obs;
  mismatch.pop_back();
  CHECK_THROWS_AS(compare_models(mismatch), Error);
  auto dup = obs;
  dup.push_back(obs.front());
  CHECK_THROWS_AS(compare_models(dup), Error);
}

TEST_CASE("model kinds are ordered by n-gram order, then the network") {
  CHECK(ordered_kinds({"nnlm", "ngram-3", "ngram-1", "ngram-4", "ngram-2"}) ==
        std::vector<std::string>{"ngram-1", "ngram-2", "ngram-3", "ngram-4", "nnlm"});
}

TEST_CASE("relative perplexity reduction") {
  CHECK(ppl_reduction_pct(69.0, 67.3) == doctest::Approx(2.4638).epsilon(1e-4));
  CHECK(ppl_reduction_pct(100.0, 110.0) == doctest::Approx(-10.0));
  CHECK_THROWS_AS(ppl_reduction_pct(0.0, 1.0), Error);
  CHECK(format_mean_std({67.34, 2.35}) == "67.3 ± 2.4");
}

TEST_CASE("report CSV layouts") {
  AccuracyCurve curve;
  curve.authors.push_back({"ann", {{1, 0.5, 0.5, 4}, {2, 0.75, 0.4330127, 4}}});
  curve.average = {"Avg.", {{1, 0.5, 0.5, 4}, {2, 0.75, 0.4330127, 4}}};
  const auto acc = accuracy_curve_csv({{"nnlm", curve}});
  CHECK(acc ==
        "author,model_kind,n_sentences,mean,std\n"
        "ann,nnlm,1,0.500000,0.500000\n"
        "ann,nnlm,2,0.750000,0.433013\n"
        "Avg.,nnlm,1,0.500000,0.500000\n"
        "Avg.,nnlm,2,0.750000,0.433013\n");

  const auto m = confusion_from_counts({"a", "b"}, {{10, 0}, {5, 5}}, 10);
  const auto conf = confusion_csv({{"ngram-4", m}});
  CHECK(count_lines(conf) == 5);
  CHECK(conf.starts_with("model_kind,true,predicted,log10_prob\n"));
  CHECK(conf.find("ngram-4,a,b,-1.041393\n") != std::string::npos);
  CHECK(conf.find("ngram-4,b,a,-0.301030\n") != std::string::npos);
}

TEST_CASE("OOV pricing policies") {
  // vocabulary {a, b, <unk>} that absorbed four pruned stems
  const auto vocab = Vocabulary::from_entries({"a", "b", std::string(kOovToken)}, 2, 4);
  const std::vector<Sentence> train{{0, 1, 2, 0, 0, 1}};
  const auto model = estimate_kneser_ney(count_ngrams(train, 1, 3));
  const auto token = make_ngram_scorer(vocab, model, 0, OovPolicy::kToken);
  const auto spread = make_ngram_scorer(vocab, model, 0, OovPolicy::kSpread);

  const StemmedSentence s{"a", "zzz", "qqq", "b"};
  const auto st = token->score(s);
  const auto ss = spread->score(s);
  CHECK(st.n_scored == 4);
  CHECK(ss.n_scored == 4);
  const double p_unk = model.prob(2, {});
  CHECK(st.sum_log10 == doctest::Approx(std::log10(model.prob(0, {})) + 2 * std::log10(p_unk) +
                                        std::log10(model.prob(1, {}))));
  CHECK(ss.sum_log10 == doctest::Approx(st.sum_log10 - 2 * std::log10(4.0)));

  const StemmedSentence known{"a", "b"};
  CHECK(token->score(known).sum_log10 == spread->score(known).sum_log10);

  CHECK(oov_policy_from_string("token") == OovPolicy::kToken);
  CHECK(to_string(OovPolicy::kSpread) == "spread");
  CHECK_THROWS_AS(oov_policy_from_string("other"), Error);
}

TEST_CASE("network and n-gram scorers share scored positions when aligned") {
  const auto vocab = Vocabulary::from_entries({"a", "b", "c", std::string(kOovToken)}, 3);
  NnlmConfig cfg;
  cfg.vocab_size = 4;
  cfg.context_size = 2;
  cfg.target_position = 2;
  cfg.embedding_dim = 2;
  cfg.hidden_units = 3;
  cfg.init_stddev = 0.5;
  const auto net = init_model(cfg);
  const auto scorer = make_nnlm_scorer(vocab, net, 4, OovPolicy::kToken);
  const StemmedSentence s{"a", "b", "c", "a", "b", "c"};
  const auto score = scorer->score(s);
  CHECK(score.n_scored == 3);  // positions 4..6

  const auto ids = vocab.encode(s);
  double expected = 0.0;
  for (std::size_t k = 4; k <= ids.size(); ++k) {
    const std::vector<TokenId> ctx{ids[k - 2]};
    const auto cache = forward(net, ctx);
    expected += std::log10(cache.probs(ids[k - 1], 0));
  }
  CHECK(score.sum_log10 == doctest::Approx(expected).epsilon(1e-12));

  CHECK(scorer->score({"a", "b", "c"}).n_scored == 0);
  CHECK(make_nnlm_scorer(vocab, net)->score(s).n_scored == 5);
}

TEST_CASE("trial records serialize") {
  ClassificationTrial t{"a", "b", 3, {{"a", 12.5}, {"b", std::numeric_limits<double>::infinity()}}, false};
  const auto j = to_json(t);
  CHECK(j["predicted_author"] == "b");
  CHECK(j["perplexities"][0]["perplexity"] == 12.5);
  CHECK(j["perplexities"][1]["perplexity"].is_null());
  const auto k = to_json(AccuracyTrial{"a", 5, 9, "a", true});
  CHECK(k["n_sentences"] == 5);
  CHECK(k["correct"] == true);
}
