// authlm: per-author language models for authorship attribution.
//
//   authlm --config exp.json prepare
//   authlm --config exp.json train [--search] [--arpa]
//   authlm --config exp.json evaluate
//   authlm --config exp.json classify [--kind nnlm] [--seed 1] [FILE]
//   authlm classify --models out/models FILE
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 no scoreable input,
// 4 training divergence.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "authlm/error.hpp"
#include "authlm/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNoScoreable = 3, kDiverged = 4 };

int exit_code_for(authlm::ErrorKind kind) {
  switch (kind) {
    case authlm::ErrorKind::kInvalidArgument: return kUsage;
    case authlm::ErrorKind::kData:
    case authlm::ErrorKind::kIo: return kData;
    case authlm::ErrorKind::kNoScoreable: return kNoScoreable;
    case authlm::ErrorKind::kDiverged: return kDiverged;
  }
  return kData;
}

std::string read_input(const std::string& path) {
  if (path.empty() || path == "-") {
    return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw authlm::Error(authlm::ErrorKind::kIo, fmt::format("cannot read '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_classification(const authlm::ClassifyOutcome& outcome, bool as_json) {
  const auto& trial = outcome.trial;
  if (as_json) {
    nlohmann::json ppl = nlohmann::json::object();
    for (const auto& [author, p] : trial.perplexities) {
      ppl[author] = std::isfinite(p) ? nlohmann::json(p) : nlohmann::json();
    }
    const nlohmann::json j = {{"prediction", trial.predicted_author},
                              {"perplexities", std::move(ppl)},
                              {"kind", outcome.kind},
                              {"seed", outcome.seed},
                              {"n_sentences", trial.n_sentences},
                              {"tie", trial.tie}};
    std::cout << j.dump(2) << '\n';
    return;
  }
  auto ranked = trial.perplexities;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  fmt::print("prediction: {}{}  ({} model, seed {}, {} sentences)\n", trial.predicted_author,
             trial.tie ? " (tie)" : "", outcome.kind, outcome.seed, trial.n_sentences);
  std::size_t width = 6;
  for (const auto& [author, p] : ranked) width = std::max(width, author.size());
  fmt::print("{:>4}  {:<{}}  {:>12}\n", "rank", "author", width, "perplexity");
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    fmt::print("{:>4}  {:<{}}  {:>12.3f}\n", i + 1, ranked[i].first, width, ranked[i].second);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-author language models for authorship attribution"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::size_t jobs = 1;
  bool as_json = false;
  bool quiet = false;
  app.add_option("--config", config_path, "Experiment configuration (JSON)");
  app.add_option("--out", out_dir, "Override the configured output directory");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--json", as_json, "Machine-readable output");
  app.add_flag("-q,--quiet", quiet, "No progress messages");

  auto* prepare = app.add_subcommand("prepare", "Segment, stem, build vocabularies and splits");
  auto* train = app.add_subcommand("train", "Train every (author, seed, kind) model");
  bool with_search = false;
  bool with_arpa = false;
  train->add_flag("--search", with_search, "Run the hyperparameter search first");
  train->add_flag("--arpa", with_arpa, "Also write n-gram models in ARPA format");
  auto* search = app.add_subcommand("search", "Hyperparameter search per author");
  auto* evaluate = app.add_subcommand("evaluate", "Perplexity table, accuracy curves, confusion");
  auto* classify = app.add_subcommand("classify", "Attribute a text to one of the trained authors");
  std::string models_dir;
  std::string kind = "nnlm";
  std::optional<std::uint64_t> seed;
  std::string input = "-";
  classify->add_option("--models", models_dir, "Model directory (default: <output_dir>/models)");
  classify->add_option("--kind", kind, "Model kind: nnlm or ngram-1..4");
  classify->add_option("--seed", seed, "Segmentation seed (default: smallest available)");
  std::string oov_policy = "spread";
  classify->add_option("--oov", oov_policy, "Out-of-vocabulary pricing: spread or token")
      ->check(CLI::IsMember({"spread", "token"}));
  classify->add_option("input", input, "Text file, or - for stdin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  authlm::RunOptions options;
  options.jobs = jobs;
  if (!quiet) options.log = [](std::string_view line) { fmt::print(stderr, "{}\n", line); };

  try {
    auto load_config = [&] {
      if (config_path.empty()) {
        throw authlm::Error(authlm::ErrorKind::kInvalidArgument, "--config is required");
      }
      auto config = authlm::load_experiment_config(config_path);
      if (!out_dir.empty()) config.output_dir = std::filesystem::absolute(out_dir).lexically_normal();
      return config;
    };

    if (*prepare) {
      authlm::run_prepare(load_config(), options);
    } else if (*train) {
      options.search = with_search;
      options.arpa = with_arpa;
      authlm::run_train(load_config(), options);
    } else if (*search) {
      authlm::run_search(load_config(), options);
    } else if (*evaluate) {
      const auto summary = authlm::run_evaluate(load_config(), options);
      if (as_json) std::cout << summary.dump(2) << '\n';
    } else if (*classify) {
      authlm::ClassifyRequest request;
      request.kind = kind;
      request.seed = seed;
      request.oov = authlm::oov_policy_from_string(oov_policy);
      if (!models_dir.empty()) {
        request.models_dir = models_dir;
      } else {
        request.models_dir = authlm::OutputLayout(load_config().output_dir).models_dir();
      }
      print_classification(authlm::run_classify(request, read_input(input)), as_json);
    }
  } catch (const authlm::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kData;
  }
  return kOk;
}
