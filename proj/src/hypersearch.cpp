#include "authlm/hypersearch.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "authlm/error.hpp"

namespace authlm {
namespace {

struct Axis {
  const char* name;
  AxisRange SearchSpace::*range;
  bool integer;
};

constexpr std::array<Axis, 5> kAxes = {{
    {"embedding_dim", &SearchSpace::embedding_dim, true},
    {"hidden_units", &SearchSpace::hidden_units, true},
    {"learning_rate", &SearchSpace::learning_rate, false},
    {"momentum", &SearchSpace::momentum, false},
    {"batch_size", &SearchSpace::batch_size, true},
}};

using Point = std::array<double, 5>;

NnlmConfig apply(NnlmConfig c, const Point& p) {
  c.embedding_dim = static_cast<std::size_t>(p[0]);
  c.hidden_units = static_cast<std::size_t>(p[1]);
  c.learning_rate = p[2];
  c.momentum = p[3];
  c.batch_size = static_cast<std::size_t>(p[4]);
  return c;
}

double clamp_to(AxisRange r, double v, bool integer) {
  if (integer) {
    v = std::round(v);
    return std::clamp(v, std::ceil(r.lo), std::floor(r.hi));
  }
  return std::clamp(v, r.lo, r.hi);
}

// Cartesian product of the per-axis value lists, first axis slowest.
std::vector<Point> cartesian(const std::array<std::vector<double>, 5>& values) {
  std::vector<Point> out{Point{}};
  for (std::size_t a = 0; a < values.size(); ++a) {
    std::vector<Point> next;
    for (const auto& p : out) {
      for (double v : values[a]) {
        Point q = p;
        q[a] = v;
        next.push_back(q);
      }
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace

void SearchSpace::validate() const {
  for (const auto& axis : kAxes) {
    const AxisRange r = this->*axis.range;
    if (!(r.lo > 0.0) || !(r.hi >= r.lo) || !std::isfinite(r.hi)) {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("search space: bad range for {}", axis.name));
    }
    if (axis.integer && std::ceil(r.lo) > std::floor(r.hi)) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("search space: {} range holds no integer", axis.name));
    }
  }
  if (momentum.hi >= 1.0) throw Error(ErrorKind::kInvalidArgument, "search space: momentum must stay below 1");
  if (grid_points == 0) throw Error(ErrorKind::kInvalidArgument, "search space: grid_points must be positive");
  if (!(refinement > 0.0 && refinement <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "search space: refinement must be in (0, 1]");
  }
  if (max_stages == 0) throw Error(ErrorKind::kInvalidArgument, "search space: max_stages must be positive");
}

nlohmann::json to_json(const SearchSpace& space) {
  nlohmann::json j;
  for (const auto& axis : kAxes) {
    const AxisRange r = space.*axis.range;
    j[axis.name] = {r.lo, r.hi};
  }
  j["grid_points"] = space.grid_points;
  j["refinement"] = space.refinement;
  j["max_stages"] = space.max_stages;
  return j;
}

SearchSpace search_space_from_json(const nlohmann::json& j, SearchSpace defaults) {
  if (!j.is_object()) throw Error(ErrorKind::kInvalidArgument, "search space must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto axis = std::find_if(kAxes.begin(), kAxes.end(), [&](const Axis& a) { return key == a.name; });
    if (axis != kAxes.end()) {
      if (!value.is_array() || value.size() != 2) {
        throw Error(ErrorKind::kInvalidArgument, fmt::format("search space: {} must be [lo, hi]", key));
      }
      defaults.*(axis->range) = {value.at(0).get<double>(), value.at(1).get<double>()};
    } else if (key == "grid_points") {
      defaults.grid_points = value.get<std::size_t>();
    } else if (key == "refinement") {
      defaults.refinement = value.get<double>();
    } else if (key == "max_stages") {
      defaults.max_stages = value.get<std::size_t>();
    } else {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("search space: unknown key '{}'", key));
    }
  }
  defaults.validate();
  return defaults;
}

std::vector<double> geometric_grid(AxisRange range, std::size_t points, bool integer) {
  std::vector<double> out;
  if (points <= 1 || range.lo == range.hi) {
    const double mid = points <= 1 ? std::sqrt(range.lo * range.hi) : range.lo;
    out.push_back(clamp_to(range, mid, integer));
    return out;
  }
  const double ratio = range.hi / range.lo;
  for (std::size_t i = 0; i < points; ++i) {
    const double v = range.lo * std::pow(ratio, static_cast<double>(i) / static_cast<double>(points - 1));
    out.push_back(clamp_to(range, v, integer));
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

AxisRange refine_range(AxisRange full, double center, double factor) {
  const double half = 0.5 * factor * std::log(full.hi / full.lo);
  return {std::max(full.lo, center * std::exp(-half)), std::min(full.hi, center * std::exp(half))};
}

SearchResult search(const ContextSet& train_pairs, const ContextSet& valid_pairs,
                    const SearchSpace& space, const NnlmConfig& fixed, std::uint64_t seed,
                    const SearchCallback& on_point) {
  space.validate();
  NnlmConfig base = fixed;
  base.init_seed = seed;

  SearchResult result;
  result.best_perplexity = std::numeric_limits<double>::infinity();
  std::map<Point, double> evaluated;
  std::array<AxisRange, 5> ranges;
  for (std::size_t a = 0; a < kAxes.size(); ++a) ranges[a] = space.*kAxes[a].range;
  Point winner{};
  bool have_winner = false;

  for (std::size_t stage = 1; stage <= space.max_stages; ++stage) {
    std::array<std::vector<double>, 5> values;
    for (std::size_t a = 0; a < kAxes.size(); ++a) {
      values[a] = geometric_grid(ranges[a], space.grid_points, kAxes[a].integer);
    }
    for (const Point& p : cartesian(values)) {
      if (evaluated.contains(p)) continue;
      SearchPoint sp;
      sp.stage = stage;
      sp.config = apply(base, p);
      const auto start = std::chrono::steady_clock::now();
      try {
        const auto trained = train(train_pairs, valid_pairs, sp.config);
        sp.valid_perplexity = std::exp(evaluate_cost(trained.model, valid_pairs));
        if (!std::isfinite(sp.valid_perplexity)) sp.valid_perplexity = std::numeric_limits<double>::infinity();
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kDiverged) throw;
        sp.valid_perplexity = std::numeric_limits<double>::infinity();
      }
      sp.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      evaluated.emplace(p, sp.valid_perplexity);
      if (sp.valid_perplexity < result.best_perplexity) {
        result.best_perplexity = sp.valid_perplexity;
        result.best = sp.config;
        winner = p;
        have_winner = true;
      }
      if (on_point) on_point(sp);
      result.trace.push_back(std::move(sp));
    }
    if (!have_winner) break;
    for (std::size_t a = 0; a < kAxes.size(); ++a) {
      const AxisRange full = space.*kAxes[a].range;
      const double factor = std::pow(space.refinement, static_cast<double>(stage));
      ranges[a] = refine_range(full, winner[a], factor);
    }
  }
  if (!have_winner) throw Error(ErrorKind::kDiverged, "search: every configuration diverged");
  return result;
}

SearchResult search(const EncodedCorpus& corpus, const SearchSpace& space, const NnlmConfig& fixed,
                    std::uint64_t seed, const SearchCallback& on_point) {
  NnlmConfig cfg = fixed;
  cfg.vocab_size = corpus.vocab.size();
  const auto train_s = corpus.split(SplitLabel::kTrain);
  const auto valid_s = corpus.split(SplitLabel::kValid);
  const auto train_pairs = extract_contexts(train_s, cfg.context_size, cfg.target_position);
  const auto valid_pairs = extract_contexts(valid_s, cfg.context_size, cfg.target_position);
  return search(train_pairs, valid_pairs, space, cfg, seed, on_point);
}

std::string search_trace_csv(const SearchResult& result) {
  std::string out =
      "stage,embedding_dim,hidden_units,learning_rate,momentum,batch_size,valid_ppl,wall_seconds\n";
  for (const auto& p : result.trace) {
    out += fmt::format("{},{},{},{},{},{},{:.6f},{:.3f}\n", p.stage, p.config.embedding_dim,
                       p.config.hidden_units, p.config.learning_rate, p.config.momentum,
                       p.config.batch_size, p.valid_perplexity, p.wall_seconds);
  }
  return out;
}

}  // namespace authlm
