#include "authlm/nnlm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "authlm/error.hpp"

namespace authlm {
namespace {

constexpr std::size_t kEvalBatch = 1024;

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw Error(ErrorKind::kInvalidArgument, fmt::format("NnlmConfig.{}: {}", field, why));
}

template <typename M>
void fill_gaussian(M& m, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  // row-major fill order keeps the draw sequence independent of storage order
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
  }
}

// log-sum-exp of every column
Eigen::RowVectorXd column_lse(const Matrix& logits) {
  const Eigen::RowVectorXd max = logits.colwise().maxCoeff();
  Eigen::RowVectorXd lse(logits.cols());
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    lse(b) = max(b) + std::log((logits.col(b).array() - max(b)).exp().sum());
  }
  return lse;
}

}  // namespace

// --- config -----------------------------------------------------------------

void NnlmConfig::validate() const {
  require(vocab_size >= 2, "vocab_size", "must be >= 2");
  require(context_size >= 2, "context_size", "N must be >= 2");
  require(target_position >= 1 && target_position <= context_size, "target_position",
          "t must satisfy 1 <= t <= N");
  require(embedding_dim >= 1, "embedding_dim", "must be >= 1");
  require(hidden_units >= 1, "hidden_units", "must be >= 1");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(epochs >= 1, "epochs", "must be >= 1");
  require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate", "must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum", "must satisfy 0 <= alpha < 1");
  require(decay_factor > 0.0 && decay_factor <= 1.0, "decay_factor", "must be in (0, 1]");
  require(decay_start_epoch >= 1, "decay_start_epoch", "must be >= 1");
  require(std::isfinite(init_stddev) && init_stddev >= 0.0, "init_stddev", "must be >= 0");
}

double NnlmConfig::learning_rate_at(std::size_t epoch) const {
  if (epoch < decay_start_epoch) return learning_rate;
  return learning_rate * std::pow(decay_factor, static_cast<double>(epoch - decay_start_epoch + 1));
}

nlohmann::json to_json(const NnlmConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"context_size", c.context_size},
          {"target_position", c.target_position},
          {"embedding_dim", c.embedding_dim},
          {"hidden_units", c.hidden_units},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"decay_start_epoch", c.decay_start_epoch},
          {"decay_factor", c.decay_factor},
          {"init_seed", c.init_seed},
          {"init_stddev", c.init_stddev}};
}

NnlmConfig nnlm_config_from_json(const nlohmann::json& j, NnlmConfig c) {
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.context_size = j.value("context_size", c.context_size);
  c.target_position = j.value("target_position", c.target_position);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.decay_start_epoch = j.value("decay_start_epoch", c.decay_start_epoch);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.init_seed = j.value("init_seed", c.init_seed);
  c.init_stddev = j.value("init_stddev", c.init_stddev);
  return c;
}

// --- model ------------------------------------------------------------------

void NnlmModel::validate() const {
  config.validate();
  const auto v = static_cast<Eigen::Index>(config.vocab_size);
  const auto e = static_cast<Eigen::Index>(config.embedding_dim);
  const auto h = static_cast<Eigen::Index>(config.hidden_units);
  const auto in = static_cast<Eigen::Index>((config.context_size - 1) * config.embedding_dim);
  if (word_emb.rows() != v || word_emb.cols() != e || emb_hid.rows() != in ||
      emb_hid.cols() != h || hid_bias.size() != h || hid_out.rows() != h ||
      hid_out.cols() != v || out_bias.size() != v) {
    throw Error(ErrorKind::kData, "NNLM parameter shapes do not match the config");
  }
  if (!word_emb.allFinite() || !emb_hid.allFinite() || !hid_bias.allFinite() ||
      !hid_out.allFinite() || !out_bias.allFinite()) {
    throw Error(ErrorKind::kData, "NNLM has non-finite parameters");
  }
}

NnlmModel init_model(const NnlmConfig& config) {
  config.validate();
  const auto v = static_cast<Eigen::Index>(config.vocab_size);
  const auto e = static_cast<Eigen::Index>(config.embedding_dim);
  const auto h = static_cast<Eigen::Index>(config.hidden_units);
  const auto in = static_cast<Eigen::Index>((config.context_size - 1) * config.embedding_dim);

  NnlmModel m;
  m.config = config;
  m.word_emb.resize(v, e);
  m.emb_hid.resize(in, h);
  m.hid_out.resize(h, v);
  m.hid_bias = Vector::Zero(h);
  m.out_bias = Vector::Zero(v);

  std::mt19937_64 rng(config.init_seed);
  fill_gaussian(m.word_emb, rng, config.init_stddev);
  fill_gaussian(m.emb_hid, rng, config.init_stddev);
  fill_gaussian(m.hid_out, rng, config.init_stddev);
  return m;
}

ForwardCache forward(const NnlmModel& model, std::span<const TokenId> contexts) {
  const auto& cfg = model.config;
  const std::size_t ctx = cfg.context_size - 1;
  const auto e = static_cast<Eigen::Index>(cfg.embedding_dim);
  if (contexts.empty() || contexts.size() % ctx != 0) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("forward: {} indices is not a whole number of {}-word contexts",
                            contexts.size(), ctx));
  }
  for (TokenId id : contexts) {
    if (id >= cfg.vocab_size) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("forward: word index {} out of range (V={})", id, cfg.vocab_size));
    }
  }
  if (!model.word_emb.allFinite() || !model.emb_hid.allFinite() || !model.hid_out.allFinite() ||
      !model.hid_bias.allFinite() || !model.out_bias.allFinite()) {
    throw Error(ErrorKind::kDiverged, "forward: non-finite weight");
  }

  const auto batch = static_cast<Eigen::Index>(contexts.size() / ctx);
  ForwardCache c;
  c.contexts.assign(contexts.begin(), contexts.end());
  c.embedded.resize(static_cast<Eigen::Index>(ctx) * e, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < ctx; ++p) {
      const TokenId id = contexts[static_cast<std::size_t>(b) * ctx + p];
      c.embedded.block(static_cast<Eigen::Index>(p) * e, b, e, 1) =
          model.word_emb.row(id).transpose();
    }
  }

  c.hidden_in.noalias() = model.emb_hid.transpose() * c.embedded;
  c.hidden_in.colwise() += model.hid_bias;
  c.hidden = (1.0 + (-c.hidden_in.array()).exp()).inverse().matrix();

  c.logits.noalias() = model.hid_out.transpose() * c.hidden;
  c.logits.colwise() += model.out_bias;

  const Eigen::RowVectorXd max = c.logits.colwise().maxCoeff();
  c.probs.resize(c.logits.rows(), c.logits.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    c.probs.col(b) = (c.logits.col(b).array() - max(b)).exp().matrix();
    c.probs.col(b) /= c.probs.col(b).sum();
  }
  return c;
}

double cross_entropy(const ForwardCache& cache, std::span<const TokenId> targets) {
  const auto batch = static_cast<std::size_t>(cache.logits.cols());
  if (targets.size() != batch) {
    throw Error(ErrorKind::kInvalidArgument, "cross_entropy: targets/batch size mismatch");
  }
  const Eigen::RowVectorXd lse = column_lse(cache.logits);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    total += lse(static_cast<Eigen::Index>(b)) -
             cache.logits(static_cast<Eigen::Index>(targets[b]), static_cast<Eigen::Index>(b));
  }
  return total / static_cast<double>(batch);
}

// --- gradients --------------------------------------------------------------

NnlmGradients NnlmGradients::zeros_like(const NnlmModel& m) {
  NnlmGradients g;
  g.word_emb = RowMatrix::Zero(m.word_emb.rows(), m.word_emb.cols());
  g.emb_hid = Matrix::Zero(m.emb_hid.rows(), m.emb_hid.cols());
  g.hid_bias = Vector::Zero(m.hid_bias.size());
  g.hid_out = Matrix::Zero(m.hid_out.rows(), m.hid_out.cols());
  g.out_bias = Vector::Zero(m.out_bias.size());
  return g;
}

bool NnlmGradients::all_finite() const {
  return word_emb.allFinite() && emb_hid.allFinite() && hid_bias.allFinite() &&
         hid_out.allFinite() && out_bias.allFinite();
}

NnlmGradients backward(const NnlmModel& model, const ForwardCache& cache,
                       std::span<const TokenId> targets) {
  const auto& cfg = model.config;
  const std::size_t ctx = cfg.context_size - 1;
  const auto e = static_cast<Eigen::Index>(cfg.embedding_dim);
  const auto batch = static_cast<Eigen::Index>(cache.probs.cols());
  if (cache.probs.rows() != static_cast<Eigen::Index>(cfg.vocab_size) ||
      cache.hidden.rows() != static_cast<Eigen::Index>(cfg.hidden_units) ||
      cache.embedded.rows() != static_cast<Eigen::Index>(ctx * cfg.embedding_dim) ||
      cache.contexts.size() != static_cast<std::size_t>(batch) * ctx) {
    throw Error(ErrorKind::kInvalidArgument, "backward: cache does not match the model shape");
  }
  if (targets.size() != static_cast<std::size_t>(batch)) {
    throw Error(ErrorKind::kInvalidArgument, "backward: targets/batch size mismatch");
  }

  // dC/dz_out = y_out - t, averaged over the batch
  Matrix d_out = cache.probs;
  for (Eigen::Index b = 0; b < batch; ++b) d_out(static_cast<Eigen::Index>(targets[b]), b) -= 1.0;
  d_out /= static_cast<double>(batch);

  NnlmGradients g;
  g.hid_out.noalias() = cache.hidden * d_out.transpose();
  g.out_bias = d_out.rowwise().sum();

  Matrix d_hid = model.hid_out * d_out;
  d_hid.array() *= cache.hidden.array() * (1.0 - cache.hidden.array());
  g.emb_hid.noalias() = cache.embedded * d_hid.transpose();
  g.hid_bias = d_hid.rowwise().sum();

  // the embedding layer is linear, so dC/dz_emb = dC/dy_emb
  const Matrix d_emb = model.emb_hid * d_hid;
  g.word_emb = RowMatrix::Zero(model.word_emb.rows(), model.word_emb.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < ctx; ++p) {
      const TokenId id = cache.contexts[static_cast<std::size_t>(b) * ctx + p];
      g.word_emb.row(id) += d_emb.block(static_cast<Eigen::Index>(p) * e, b, e, 1).transpose();
    }
  }
  return g;
}

void update(NnlmModel& model, const NnlmGradients& grads, MomentumState& state, double epsilon,
            double alpha) {
  if (!grads.all_finite()) throw Error(ErrorKind::kDiverged, "diverged");
  auto step = [&](auto& param, auto& delta, const auto& grad) {
    delta = alpha * delta + grad;
    param -= epsilon * delta;
  };
  step(model.word_emb, state.word_emb, grads.word_emb);
  step(model.emb_hid, state.emb_hid, grads.emb_hid);
  step(model.hid_bias, state.hid_bias, grads.hid_bias);
  step(model.hid_out, state.hid_out, grads.hid_out);
  step(model.out_bias, state.out_bias, grads.out_bias);
}

// --- training ---------------------------------------------------------------

nlohmann::json to_json(const TrainHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& r : h.epochs) {
    epochs.push_back({{"epoch", r.epoch},
                      {"train_cost", r.train_cost},
                      {"valid_cost", r.valid_cost},
                      {"learning_rate", r.learning_rate}});
  }
  return {{"epochs", std::move(epochs)},
          {"stopped_early", h.stopped_early},
          {"best_epoch", h.best_epoch}};
}

double evaluate_cost(const NnlmModel& model, const ContextSet& pairs) {
  if (pairs.size() == 0) throw Error(ErrorKind::kData, "evaluate_cost: no context pairs");
  const std::size_t ctx = pairs.context_size;
  double total = 0.0;
  for (std::size_t start = 0; start < pairs.size(); start += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, pairs.size() - start);
    const auto cache = forward(model, std::span(pairs.contexts).subspan(start * ctx, n * ctx));
    total += cross_entropy(cache, std::span(pairs.targets).subspan(start, n)) *
             static_cast<double>(n);
  }
  return total / static_cast<double>(pairs.size());
}

TrainResult train(const ContextSet& train_pairs, const ContextSet& valid_pairs,
                  const NnlmConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_pairs.size() == 0) throw Error(ErrorKind::kData, "train: no training context pairs");
  if (valid_pairs.size() == 0) throw Error(ErrorKind::kData, "train: no validation context pairs");
  if (train_pairs.context_size != config.context_size - 1 ||
      valid_pairs.context_size != config.context_size - 1) {
    throw Error(ErrorKind::kInvalidArgument, "train: context size does not match N-1");
  }

  TrainResult result{init_model(config), {}};
  NnlmModel& model = result.model;
  MomentumState state = NnlmGradients::zeros_like(model);
  std::mt19937_64 rng(config.init_seed ^ 0x9e3779b97f4a7c15ULL);

  const std::size_t n = train_pairs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TokenId> batch_ctx;
  std::vector<TokenId> batch_tgt;

  NnlmModel previous = model;
  double previous_valid = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.learning_rate_at(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double cost_sum = 0.0;
    std::size_t iteration = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++iteration) {
      const std::size_t m = std::min(config.batch_size, n - start);
      batch_ctx.clear();
      batch_tgt.clear();
      for (std::size_t i = start; i < start + m; ++i) {
        const auto c = train_pairs.context(order[i]);
        batch_ctx.insert(batch_ctx.end(), c.begin(), c.end());
        batch_tgt.push_back(train_pairs.targets[order[i]]);
      }
      try {
        const auto cache = forward(model, batch_ctx);
        const double cost = cross_entropy(cache, batch_tgt);
        const auto grads = backward(model, cache, batch_tgt);
        if (!std::isfinite(cost) || !grads.all_finite()) throw Error(ErrorKind::kDiverged, "diverged");
        cost_sum += cost * static_cast<double>(m);
        update(model, grads, state, lr, config.momentum);
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::kDiverged) throw;
        throw Error(ErrorKind::kDiverged,
                    fmt::format("diverged at epoch {} iteration {}", epoch, iteration));
      }
    }

    EpochRecord rec{epoch, cost_sum / static_cast<double>(n), 0.0, lr};
    try {
      rec.valid_cost = evaluate_cost(model, valid_pairs);
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::kDiverged) throw;
      throw Error(ErrorKind::kDiverged, fmt::format("diverged at epoch {} (validation)", epoch));
    }
    if (!std::isfinite(rec.valid_cost)) {
      throw Error(ErrorKind::kDiverged, fmt::format("diverged at epoch {} (validation)", epoch));
    }
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (epoch > 1 && rec.valid_cost > previous_valid) {
      result.history.stopped_early = true;
      model = std::move(previous);
      break;
    }
    result.history.best_epoch = epoch;
    previous_valid = rec.valid_cost;
    if (epoch < config.epochs) previous = model;
  }
  return result;
}

TrainResult train(const EncodedCorpus& corpus, NnlmConfig config, const EpochCallback& on_epoch) {
  config.vocab_size = corpus.vocab.size();
  const auto train_split = corpus.split(SplitLabel::kTrain);
  const auto valid_split = corpus.split(SplitLabel::kValid);
  const auto train_pairs =
      extract_contexts(train_split, config.context_size, config.target_position);
  const auto valid_pairs =
      extract_contexts(valid_split, config.context_size, config.target_position);
  if (train_pairs.size() == 0 || valid_pairs.size() == 0) {
    throw Error(ErrorKind::kData,
                fmt::format("author '{}': no context pairs of length {} in train/valid splits",
                            corpus.author_id, config.context_size));
  }
  return train(train_pairs, valid_pairs, config, on_epoch);
}

// --- scoring ----------------------------------------------------------------

SentenceScore sentence_log10prob(const NnlmModel& model, std::span<const TokenId> sentence) {
  const auto& cfg = model.config;
  if (cfg.target_position != cfg.context_size) {
    throw Error(ErrorKind::kInvalidArgument,
                "sentence_log10prob: scoring needs a next-word model (t == N)");
  }
  const std::size_t n = cfg.context_size;
  SentenceScore score;
  if (sentence.size() < n) return score;

  std::vector<TokenId> contexts;
  std::vector<TokenId> targets;
  for (std::size_t k = n - 1; k < sentence.size(); ++k) {
    contexts.insert(contexts.end(), sentence.begin() + static_cast<std::ptrdiff_t>(k - n + 1),
                    sentence.begin() + static_cast<std::ptrdiff_t>(k));
    targets.push_back(sentence[k]);
  }
  for (TokenId id : targets) {
    if (id >= cfg.vocab_size) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("sentence_log10prob: word index {} out of range", id));
    }
  }
  const auto cache = forward(model, contexts);
  const Eigen::RowVectorXd lse = column_lse(cache.logits);
  for (std::size_t b = 0; b < targets.size(); ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    score.sum_log10 += (cache.logits(static_cast<Eigen::Index>(targets[b]), col) - lse(col)) /
                       std::numbers::ln10;
  }
  score.n_scored = targets.size();
  return score;
}

}  // namespace authlm
