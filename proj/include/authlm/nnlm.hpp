#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "authlm/corpus.hpp"
#include "authlm/scoring.hpp"

namespace authlm {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct NnlmConfig {
  std::size_t vocab_size = 0;       // V
  std::size_t context_size = 4;     // N, counting the target word
  std::size_t target_position = 4;  // t, 1-based
  std::size_t embedding_dim = 50;
  std::size_t hidden_units = 200;
  std::size_t batch_size = 200;  // M
  std::size_t epochs = 15;
  double learning_rate = 0.1;  // epsilon
  double momentum = 0.9;       // alpha
  std::size_t decay_start_epoch = 10;
  double decay_factor = 0.9;
  std::uint64_t init_seed = 1;
  double init_stddev = 0.01;

  /// Throws Error(kInvalidArgument) naming the first offending field.
  void validate() const;

  /// Learning rate in effect during `epoch` (1-based): unchanged before
  /// decay_start_epoch, multiplied by decay_factor once per epoch from
  /// decay_start_epoch on.
  double learning_rate_at(std::size_t epoch) const;

  friend bool operator==(const NnlmConfig&, const NnlmConfig&) = default;
};

nlohmann::json to_json(const NnlmConfig& config);
NnlmConfig nnlm_config_from_json(const nlohmann::json& j, NnlmConfig defaults = {});

/// Word layer -> shared embedding table -> logistic hidden layer -> softmax.
struct NnlmModel {
  NnlmConfig config;
  RowMatrix word_emb;  // V x N_emb, one row per word
  Matrix emb_hid;      // (N-1)*N_emb x N_hid
  Vector hid_bias;     // N_hid
  Matrix hid_out;      // N_hid x V
  Vector out_bias;     // V

  /// Dimensions must match the config and all entries must be finite.
  void validate() const;
};

/// Weights drawn from N(0, init_stddev^2) using init_seed; biases zero.
NnlmModel init_model(const NnlmConfig& config);

/// Per-batch activations, one column per example.
struct ForwardCache {
  std::vector<TokenId> contexts;
  Matrix embedded;   // (N-1)*N_emb x B, y_emb
  Matrix hidden_in;  // N_hid x B, z_hid
  Matrix hidden;     // N_hid x B, y_hid
  Matrix logits;     // V x B, z_out
  Matrix probs;      // V x B, y_out

  std::size_t batch_size() const { return static_cast<std::size_t>(probs.cols()); }
};

/// `contexts` is a flat run of B contexts of N-1 word indices each.
ForwardCache forward(const NnlmModel& model, std::span<const TokenId> contexts);

/// Mean over the batch of -ln y_out(target), computed from the logits so it
/// stays finite even when a probability underflows.
double cross_entropy(const ForwardCache& cache, std::span<const TokenId> targets);

/// Same shapes as the model parameters; also used as the momentum buffer.
struct NnlmGradients {
  RowMatrix word_emb;
  Matrix emb_hid;
  Vector hid_bias;
  Matrix hid_out;
  Vector out_bias;

  static NnlmGradients zeros_like(const NnlmModel& model);
  bool all_finite() const;
};

using MomentumState = NnlmGradients;

/// Analytic gradient of cross_entropy() averaged over the batch.
NnlmGradients backward(const NnlmModel& model, const ForwardCache& cache,
                       std::span<const TokenId> targets);

/// delta <- alpha * delta + grad; param <- param - epsilon * delta, for all
/// five parameter tensors. Throws Error(kDiverged, "diverged") on a
/// non-finite gradient.
void update(NnlmModel& model, const NnlmGradients& grads, MomentumState& state, double epsilon,
            double alpha);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_cost = 0.0;
  double valid_cost = 0.0;
  double learning_rate = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  bool stopped_early = false;
  std::size_t best_epoch = 0;
};

nlohmann::json to_json(const TrainHistory& history);

struct TrainResult {
  NnlmModel model;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch momentum SGD with per-epoch reshuffling, geometric
/// learning-rate decay and validation-based early termination. When the
/// validation cost rises the model from the previous epoch is returned.
TrainResult train(const ContextSet& train_pairs, const ContextSet& valid_pairs,
                  const NnlmConfig& config, const EpochCallback& on_epoch = {});

/// Extracts (context, target) pairs from the corpus' train and validation
/// splits and trains; config.vocab_size is taken from the corpus.
TrainResult train(const EncodedCorpus& corpus, NnlmConfig config,
                  const EpochCallback& on_epoch = {});

/// Mean cross-entropy (nats) of `pairs` under `model`.
double evaluate_cost(const NnlmModel& model, const ContextSet& pairs);

/// Scores every position k >= N of the sentence with its N-1 preceding
/// words; shorter sentences score nothing. Requires target_position == N.
SentenceScore sentence_log10prob(const NnlmModel& model, std::span<const TokenId> sentence);

void save_model(const NnlmModel& model, const std::filesystem::path& path);
NnlmModel load_nnlm(const std::filesystem::path& path);

}  // namespace authlm
