#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <doctest.h>

#include "authlm/corpus.hpp"
#include "authlm/error.hpp"
#include "authlm/nnlm.hpp"

using namespace authlm;

namespace {

NnlmConfig tiny_config(std::size_t v, std::size_t n, std::size_t e, std::size_t h) {
  NnlmConfig c;
  c.vocab_size = v;
  c.context_size = n;
  c.target_position = n;
  c.embedding_dim = e;
  c.hidden_units = h;
  return c;
}

NnlmModel zero_model(const NnlmConfig& c) {
  NnlmConfig z = c;
  z.init_stddev = 0.0;
  return init_model(z);
}

double batch_cost(const NnlmModel& m, const std::vector<TokenId>& ctx,
                  const std::vector<TokenId>& tgt) {
  return cross_entropy(forward(m, ctx), tgt);
}

// Central difference of the batch cost against one parameter entry.
template <typename Param>
double numeric_grad(NnlmModel& m, Param& p, Eigen::Index i, Eigen::Index j,
                    const std::vector<TokenId>& ctx, const std::vector<TokenId>& tgt) {
  constexpr double h = 1e-4;
  const double orig = p(i, j);
  p(i, j) = orig + h;
  const double up = batch_cost(m, ctx, tgt);
  p(i, j) = orig - h;
  const double down = batch_cost(m, ctx, tgt);
  p(i, j) = orig;
  return (up - down) / (2 * h);
}

double rel_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / scale;
}

template <typename Param, typename Grad>
double max_rel_error(NnlmModel& m, Param& p, const Grad& g, const std::vector<TokenId>& ctx,
                     const std::vector<TokenId>& tgt) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      worst = std::max(worst, rel_error(g(i, j), numeric_grad(m, p, i, j, ctx, tgt)));
    }
  }
  return worst;
}

std::vector<Sentence> cyclic_sentences(std::size_t v, std::size_t count, std::size_t len,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sentence> out;
  for (std::size_t s = 0; s < count; ++s) {
    Sentence sent;
    TokenId w = static_cast<TokenId>(rng() % v);
    for (std::size_t k = 0; k < len; ++k) {
      sent.push_back(w);
      w = static_cast<TokenId>((w + 1) % v);
    }
    out.push_back(std::move(sent));
  }
  return out;
}

}  // namespace

TEST_CASE("forward pass matches a hand evaluation") {
  auto cfg = tiny_config(3, 2, 1, 1);
  NnlmModel m = zero_model(cfg);
  m.word_emb << 1.0, 2.0, 3.0;
  m.emb_hid(0, 0) = 0.5;
  m.hid_bias(0) = -0.5;
  m.hid_out << 1.0, 0.0, -1.0;
  m.out_bias << 0.0, 0.1, 0.0;

  const std::vector<TokenId> ctx{1};
  const auto cache = forward(m, ctx);
  const double z = 0.5 * 2.0 - 0.5;
  const double h = 1.0 / (1.0 + std::exp(-z));
  const double e0 = std::exp(h), e1 = std::exp(0.1), e2 = std::exp(-h);
  const double sum = e0 + e1 + e2;

  CHECK(cache.embedded(0, 0) == doctest::Approx(2.0));
  CHECK(cache.hidden_in(0, 0) == doctest::Approx(z));
  CHECK(cache.hidden(0, 0) == doctest::Approx(0.6224593312018546));
  CHECK(cache.probs(0, 0) == doctest::Approx(e0 / sum).epsilon(1e-12));
  CHECK(cache.probs(1, 0) == doctest::Approx(e1 / sum).epsilon(1e-12));
  CHECK(cache.probs(2, 0) == doctest::Approx(e2 / sum).epsilon(1e-12));

  const std::vector<TokenId> tgt{2};
  CHECK(cross_entropy(cache, tgt) == doctest::Approx(-std::log(e2 / sum)).epsilon(1e-12));
}

TEST_CASE("embedding layer concatenates rows of the shared table in context order") {
  auto cfg = tiny_config(5, 4, 2, 3);
  cfg.init_stddev = 0.3;
  const NnlmModel m = init_model(cfg);
  const std::vector<TokenId> ctx{4, 0, 4, 2, 2, 2};
  const auto cache = forward(m, ctx);
  REQUIRE(cache.embedded.rows() == 6);
  REQUIRE(cache.embedded.cols() == 2);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t p = 0; p < 3; ++p) {
      for (std::size_t d = 0; d < 2; ++d) {
        CHECK(cache.embedded(static_cast<Eigen::Index>(p * 2 + d), static_cast<Eigen::Index>(b)) ==
              m.word_emb(ctx[b * 3 + p], static_cast<Eigen::Index>(d)));
      }
    }
  }
}

TEST_CASE("output distributions are normalized") {
  auto cfg = tiny_config(40, 4, 6, 9);
  cfg.init_stddev = 2.0;  // large weights push the softmax towards saturation
  const NnlmModel m = init_model(cfg);
  std::mt19937_64 rng(5);
  std::vector<TokenId> ctx(3 * 64);
  for (auto& w : ctx) w = static_cast<TokenId>(rng() % 40);
  const auto cache = forward(m, ctx);
  for (Eigen::Index b = 0; b < cache.probs.cols(); ++b) {
    CHECK(std::abs(cache.probs.col(b).sum() - 1.0) <= 1e-9);
    CHECK(cache.probs.col(b).minCoeff() >= 0.0);
  }
}

TEST_CASE("forward rejects out-of-range word indices") {
  const NnlmModel m = init_model(tiny_config(5, 3, 2, 2));
  const std::vector<TokenId> ctx{1, 5};
  CHECK_THROWS_AS(forward(m, ctx), Error);
}

TEST_CASE("analytic gradients agree with central differences") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t v = 2 + rng() % 9;
    const std::size_t e = 1 + rng() % 4;
    const std::size_t h = 1 + rng() % 6;
    auto cfg = tiny_config(v, 4, e, h);
    cfg.init_seed = rng();
    cfg.init_stddev = 0.5;
    NnlmModel m = init_model(cfg);
    for (Eigen::Index i = 0; i < m.hid_bias.size(); ++i) m.hid_bias(i) = 0.3 * (i % 3) - 0.3;
    for (Eigen::Index i = 0; i < m.out_bias.size(); ++i) m.out_bias(i) = 0.2 * (i % 4) - 0.3;

    const std::size_t batch = 1 + rng() % 5;
    std::vector<TokenId> ctx(3 * batch);
    std::vector<TokenId> tgt(batch);
    for (auto& w : ctx) w = static_cast<TokenId>(rng() % v);
    for (auto& w : tgt) w = static_cast<TokenId>(rng() % v);

    const auto g = backward(m, forward(m, ctx), tgt);
    INFO("trial ", trial, " V=", v, " E=", e, " H=", h, " B=", batch);
    CHECK(max_rel_error(m, m.word_emb, g.word_emb, ctx, tgt) <= 1e-5);
    CHECK(max_rel_error(m, m.emb_hid, g.emb_hid, ctx, tgt) <= 1e-5);
    CHECK(max_rel_error(m, m.hid_bias, g.hid_bias, ctx, tgt) <= 1e-5);
    CHECK(max_rel_error(m, m.hid_out, g.hid_out, ctx, tgt) <= 1e-5);
    CHECK(max_rel_error(m, m.out_bias, g.out_bias, ctx, tgt) <= 1e-5);
  }
}

TEST_CASE("a word repeated in one context accumulates gradient from every position") {
  auto cfg = tiny_config(6, 4, 3, 4);
  cfg.init_stddev = 0.6;
  NnlmModel m = init_model(cfg);
  const std::vector<TokenId> ctx{2, 2, 2, 2, 5, 2};
  const std::vector<TokenId> tgt{1, 3};
  const auto g = backward(m, forward(m, ctx), tgt);

  for (Eigen::Index d = 0; d < 3; ++d) {
    const double numeric = numeric_grad(m, m.word_emb, 2, d, ctx, tgt);
    CHECK(rel_error(g.word_emb(2, d), numeric) <= 1e-5);
  }
  // words outside every context receive nothing
  for (TokenId w : {0u, 1u, 3u, 4u}) {
    CHECK(g.word_emb.row(w).isZero(0.0));
  }
}

TEST_CASE("momentum update follows the two-term recursion") {
  auto cfg = tiny_config(3, 2, 1, 1);
  NnlmModel m = zero_model(cfg);
  m.word_emb(0, 0) = 1.0;
  auto g = NnlmGradients::zeros_like(m);
  g.word_emb(0, 0) = 2.0;
  g.out_bias(1) = -1.0;
  auto state = NnlmGradients::zeros_like(m);

  update(m, g, state, 0.1, 0.9);
  CHECK(state.word_emb(0, 0) == doctest::Approx(2.0));
  CHECK(m.word_emb(0, 0) == doctest::Approx(0.8));
  CHECK(m.out_bias(1) == doctest::Approx(0.1));

  update(m, g, state, 0.1, 0.9);
  CHECK(state.word_emb(0, 0) == doctest::Approx(3.8));
  CHECK(m.word_emb(0, 0) == doctest::Approx(0.42));
  CHECK(m.out_bias(1) == doctest::Approx(0.1 + 0.19));

  g.hid_out(0, 0) = std::nan("");
  CHECK_THROWS_AS(update(m, g, state, 0.1, 0.9), Error);
}

TEST_CASE("learning rate schedule") {
  NnlmConfig c;
  c.learning_rate = 0.1;
  c.decay_start_epoch = 10;
  c.decay_factor = 0.9;
  CHECK(c.learning_rate_at(1) == doctest::Approx(0.1));
  CHECK(c.learning_rate_at(9) == doctest::Approx(0.1));
  CHECK(c.learning_rate_at(10) == doctest::Approx(0.09));
  CHECK(c.learning_rate_at(15) == doctest::Approx(0.1 * std::pow(0.9, 6)));
}

TEST_CASE("a uniform model assigns probability 1/V everywhere") {
  const auto cfg = tiny_config(17, 4, 3, 5);
  const NnlmModel m = zero_model(cfg);
  const Sentence s{1, 4, 9, 16, 0, 3, 3};
  const auto score = sentence_log10prob(m, s);
  CHECK(score.n_scored == 4);
  CHECK(score.sum_log10 == doctest::Approx(-4.0 * std::log10(17.0)));
  CHECK(std::pow(10.0, -score.sum_log10 / static_cast<double>(score.n_scored)) ==
        doctest::Approx(17.0));

  const Sentence too_short{1, 2, 3};
  CHECK(sentence_log10prob(m, too_short).n_scored == 0);
}

TEST_CASE("training learns a deterministic successor grammar") {
  const std::size_t v = 10;
  const auto train_s = cyclic_sentences(v, 300, 12, 1);
  const auto valid_s = cyclic_sentences(v, 40, 12, 2);
  const auto train_pairs = extract_contexts(train_s, 4, 4);
  const auto valid_pairs = extract_contexts(valid_s, 4, 4);

  auto cfg = tiny_config(v, 4, 8, 24);
  cfg.batch_size = 50;
  cfg.epochs = 25;
  cfg.learning_rate = 0.5;
  cfg.init_stddev = 0.1;
  cfg.decay_start_epoch = 30;
  const auto result = train(train_pairs, valid_pairs, cfg);
  REQUIRE_FALSE(result.history.epochs.empty());
  CHECK(result.history.epochs.front().valid_cost > result.history.epochs.back().valid_cost);
  CHECK(evaluate_cost(result.model, valid_pairs) < 0.1);
}

TEST_CASE("training is reproducible for a fixed seed") {
  const auto train_s = cyclic_sentences(7, 60, 9, 3);
  const auto valid_s = cyclic_sentences(7, 10, 9, 4);
  const auto tp = extract_contexts(train_s, 4, 4);
  const auto vp = extract_contexts(valid_s, 4, 4);
  auto cfg = tiny_config(7, 4, 3, 5);
  cfg.batch_size = 17;  // leaves a short last batch
  cfg.epochs = 3;
  const auto a = train(tp, vp, cfg);
  const auto b = train(tp, vp, cfg);
  CHECK(a.model.word_emb == b.model.word_emb);
  CHECK(a.model.hid_out == b.model.hid_out);
  CHECK(a.history.epochs.back().valid_cost == b.history.epochs.back().valid_cost);
}

TEST_CASE("a rising validation cost stops training and returns the previous model") {
  const auto train_s = cyclic_sentences(8, 80, 10, 5);
  const auto valid_s = cyclic_sentences(8, 20, 10, 6);
  const auto tp = extract_contexts(train_s, 4, 4);
  const auto vp = extract_contexts(valid_s, 4, 4);
  auto cfg = tiny_config(8, 4, 4, 6);
  cfg.batch_size = 10;
  cfg.epochs = 15;
  cfg.learning_rate = 40.0;
  cfg.momentum = 0.95;

  const auto result = train(tp, vp, cfg);
  const auto& h = result.history;
  REQUIRE(h.stopped_early);
  REQUIRE(h.epochs.size() >= 2);
  CHECK(h.best_epoch == h.epochs.size() - 1);
  CHECK(h.epochs.back().valid_cost > h.epochs[h.epochs.size() - 2].valid_cost);
  // the returned weights reproduce the best epoch's validation cost
  CHECK(evaluate_cost(result.model, vp) ==
        doctest::Approx(h.epochs[h.best_epoch - 1].valid_cost).epsilon(1e-12));
}

TEST_CASE("non-finite training cost is reported as divergence with its position") {
  const auto train_s = cyclic_sentences(8, 40, 10, 7);
  const auto valid_s = cyclic_sentences(8, 10, 10, 8);
  const auto tp = extract_contexts(train_s, 4, 4);
  const auto vp = extract_contexts(valid_s, 4, 4);
  auto cfg = tiny_config(8, 4, 4, 6);
  cfg.batch_size = 10;
  cfg.learning_rate = 1e300;
  cfg.init_stddev = 1.0;
  try {
    train(tp, vp, cfg);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDiverged);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("model file round trip") {
  const auto dir = std::filesystem::path(AUTHLM_TEST_TMP);
  std::filesystem::create_directories(dir);
  auto cfg = tiny_config(11, 4, 3, 5);
  cfg.init_stddev = 0.2;
  cfg.init_seed = 99;
  const NnlmModel m = init_model(cfg);
  save_model(m, dir / "m.bin");
  const NnlmModel back = load_nnlm(dir / "m.bin");
  CHECK(back.config == m.config);
  CHECK(back.word_emb == m.word_emb);
  CHECK(back.emb_hid == m.emb_hid);
  CHECK(back.hid_bias == m.hid_bias);
  CHECK(back.hid_out == m.hid_out);
  CHECK(back.out_bias == m.out_bias);

  {
    std::ofstream bad(dir / "bad.bin", std::ios::binary);
    bad << "not a model";
  }
  CHECK_THROWS_AS(load_nnlm(dir / "bad.bin"), Error);
  CHECK_THROWS_AS(load_nnlm(dir / "missing.bin"), Error);

  // truncation is detected, not read as zeros
  const auto size = std::filesystem::file_size(dir / "m.bin");
  std::filesystem::copy_file(dir / "m.bin", dir / "short.bin",
                             std::filesystem::copy_options::overwrite_existing);
  std::filesystem::resize_file(dir / "short.bin", size - 8);
  CHECK_THROWS_AS(load_nnlm(dir / "short.bin"), Error);
}

TEST_CASE("config validation and JSON") {
  auto ok = tiny_config(10, 4, 5, 6);
  CHECK_NOTHROW(ok.validate());

  auto bad = ok;
  bad.target_position = 5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.context_size = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.decay_factor = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);

  ok.learning_rate = 0.123;
  ok.init_seed = 77;
  CHECK(nnlm_config_from_json(to_json(ok)) == ok);
  const auto partial = nnlm_config_from_json({{"hidden_units", 42}});
  CHECK(partial.hidden_units == 42);
  CHECK(partial.embedding_dim == NnlmConfig{}.embedding_dim);
}
