#include "trace/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "trace/error.hpp"
#include "trace/numeric.hpp"
#include "trace/rng.hpp"
#include "trace/vec.hpp"

namespace trace {

using ordered_json = nlohmann::ordered_json;

// ============================================================================
// Exchange pairing
// ============================================================================

std::vector<ExchangePair> pair_exchanges(const Conversation& conversation) {
  const auto& turns = conversation.turns;
  std::vector<ExchangePair> pairs;
  int next_index = 1;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (turns[i].role != Role::user) continue;
    ExchangePair pair;
    pair.index = next_index++;
    pair.user_turn = i;
    // The answering model turn is the first model turn before the next user
    // turn; later model turns in the same window stay unpaired.
    if (i + 1 < turns.size() && turns[i + 1].role == Role::model) {
      pair.model_turn = i + 1;
    }
    pairs.push_back(pair);
  }
  return pairs;
}

// ============================================================================
// JSON serialization
// ============================================================================

namespace {

const char* role_name(Role role) { return role == Role::user ? "user" : "model"; }

ordered_json embedding_to_json(const std::optional<std::vector<double>>& emb) {
  if (!emb) return nullptr;
  return ordered_json(*emb);
}

ordered_json turn_to_json(const Turn& turn) {
  ordered_json j;
  j["role"] = role_name(turn.role);
  j["text"] = turn.text ? ordered_json(*turn.text) : ordered_json(nullptr);
  j["start_ms"] = turn.start_ms;
  j["end_ms"] = turn.end_ms;
  j["embedding"] = embedding_to_json(turn.embedding);
  return j;
}

ordered_json conversation_to_json(const Conversation& c) {
  ordered_json j;
  j["conversation_id"] = c.conversation_id;
  j["user_id"] = c.user_id;
  j["use_case"] = c.use_case;
  j["goal_text"] = c.goal_text ? ordered_json(*c.goal_text) : ordered_json(nullptr);
  j["satisfaction"] = c.satisfaction;
  j["goal_embedding"] = embedding_to_json(c.goal_embedding);
  ordered_json turns = ordered_json::array();
  for (const Turn& t : c.turns) turns.push_back(turn_to_json(t));
  j["turns"] = std::move(turns);
  return j;
}

std::vector<double> parse_embedding(const ordered_json& j, const char* what) {
  if (!j.is_array()) throw DataError(std::string(what) + " must be an array of numbers");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw DataError(std::string(what) + " must contain only numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

Turn turn_from_json(const ordered_json& j, std::size_t turn_index) {
  if (!j.is_object()) throw DataError("turn " + std::to_string(turn_index) + " is not an object");
  Turn t;
  const auto role = j.find("role");
  if (role == j.end() || !role->is_string()) {
    throw DataError("turn " + std::to_string(turn_index) + " has no role");
  }
  const std::string r = role->get<std::string>();
  if (r == "user") {
    t.role = Role::user;
  } else if (r == "model") {
    t.role = Role::model;
  } else {
    throw DataError("turn " + std::to_string(turn_index) + " has unknown role '" + r + "'");
  }
  if (const auto it = j.find("text"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw DataError("turn text must be a string or null");
    t.text = it->get<std::string>();
  }
  const auto start = j.find("start_ms");
  const auto end = j.find("end_ms");
  if (start == j.end() || end == j.end() || !start->is_number_integer() ||
      !end->is_number_integer()) {
    throw DataError("turn " + std::to_string(turn_index) +
                    " needs integer start_ms and end_ms");
  }
  t.start_ms = start->get<std::int64_t>();
  t.end_ms = end->get<std::int64_t>();
  if (const auto it = j.find("embedding"); it != j.end() && !it->is_null()) {
    t.embedding = parse_embedding(*it, "turn embedding");
  }
  return t;
}

Conversation conversation_from_json(const ordered_json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  Conversation c;
  for (const char* key : {"conversation_id", "user_id", "use_case"}) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw DataError(std::string("missing or non-string field '") + key + "'");
    }
  }
  c.conversation_id = j["conversation_id"].get<std::string>();
  c.user_id = j["user_id"].get<std::string>();
  c.use_case = j["use_case"].get<std::string>();
  if (const auto it = j.find("goal_text"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw DataError("goal_text must be a string or null");
    c.goal_text = it->get<std::string>();
  }
  const auto sat = j.find("satisfaction");
  if (sat == j.end() || !sat->is_number_integer()) {
    throw DataError("missing or non-integer field 'satisfaction'");
  }
  c.satisfaction = sat->get<int>();
  if (const auto it = j.find("goal_embedding"); it != j.end() && !it->is_null()) {
    c.goal_embedding = parse_embedding(*it, "goal_embedding");
  }
  const auto turns = j.find("turns");
  if (turns == j.end() || !turns->is_array()) {
    throw DataError("missing or non-array field 'turns'");
  }
  std::size_t idx = 0;
  for (const auto& tj : *turns) c.turns.push_back(turn_from_json(tj, idx++));
  return c;
}

// Validation per the record invariants. Mutates the conversation when
// normalization or a rating offset applies.
void validate_and_finish(Conversation& c, const IngestOptions& options,
                         std::optional<std::size_t>& corpus_dim) {
  if (c.turns.empty()) throw DataError("conversation has no turns");

  const int offset = options.rating_offset;
  const int raw = c.satisfaction;
  const int lo = 1 - offset, hi = 5 - offset;
  if (raw < lo || raw > hi) {
    std::ostringstream os;
    os << "satisfaction " << raw << " outside accepted range [" << lo << ", " << hi << "]";
    if (offset == 0 && raw >= 0 && raw <= 4) {
      os << " (0-4 coded files need rating_offset = 1)";
    }
    throw DataError(os.str());
  }
  c.satisfaction = raw + offset;

  for (std::size_t i = 0; i + 1 < c.turns.size(); ++i) {
    if (c.turns[i + 1].start_ms < c.turns[i].start_ms) {
      throw DataError("turns are not sorted by start_ms (turn " + std::to_string(i + 1) + ")");
    }
  }
  for (std::size_t i = 0; i < c.turns.size(); ++i) {
    if (c.turns[i].end_ms < c.turns[i].start_ms) {
      throw DataError("turn " + std::to_string(i) + " ends before it starts");
    }
  }

  auto check_embedding = [&](std::optional<std::vector<double>>& emb, const std::string& what) {
    if (!emb) return;
    if (!corpus_dim) corpus_dim = emb->size();
    if (emb->size() != *corpus_dim) {
      throw DataError(what + " has dimension " + std::to_string(emb->size()) +
                      ", corpus dimension is " + std::to_string(*corpus_dim));
    }
    for (double x : *emb) {
      if (!std::isfinite(x)) throw DataError(what + " contains a non-finite value");
    }
    if (norm(*emb) == 0.0) throw DataError(what + " has zero norm");
    if (options.normalize) emb = normalized_unit(std::move(*emb));
  };

  for (std::size_t i = 0; i < c.turns.size(); ++i) {
    check_embedding(c.turns[i].embedding, "turn " + std::to_string(i) + " embedding");
  }
  check_embedding(c.goal_embedding, "goal_embedding");
}

}  // namespace

std::string conversation_to_json_line(const Conversation& conversation) {
  return conversation_to_json(conversation).dump();
}

void save_corpus(const std::string& path, std::span<const Conversation> corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const Conversation& c : corpus) out << conversation_to_json_line(c) << '\n';
  if (!out) throw DataError("failed writing '" + path + "'");
}

namespace {

struct SidecarOverride {
  int turn_index = 0;  // -1 addresses the goal embedding
  std::vector<double> embedding;
};

std::map<std::string, std::vector<SidecarOverride>> load_sidecar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding sidecar '" + path + "'");
  std::map<std::string, std::vector<SidecarOverride>> overrides;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const ordered_json::parse_error& e) {
      throw DataError("sidecar line " + std::to_string(line_no) + ": " + e.what());
    }
    SidecarOverride o;
    if (!j.contains("conversation_id") || !j.contains("turn_index") || !j.contains("embedding")) {
      throw DataError("sidecar line " + std::to_string(line_no) +
                      ": needs conversation_id, turn_index, embedding");
    }
    o.turn_index = j["turn_index"].get<int>();
    o.embedding = parse_embedding(j["embedding"], "sidecar embedding");
    overrides[j["conversation_id"].get<std::string>()].push_back(std::move(o));
  }
  return overrides;
}

}  // namespace

LoadResult load_corpus(const std::string& path, const IngestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");

  std::map<std::string, std::vector<SidecarOverride>> overrides;
  if (options.sidecar_path) overrides = load_sidecar(*options.sidecar_path);

  LoadResult result;
  std::optional<std::size_t> corpus_dim;
  std::map<std::string, std::size_t> seen_ids;  // id -> first line
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::string conv_id;
    try {
      ordered_json j;
      try {
        j = ordered_json::parse(line);
      } catch (const ordered_json::parse_error& e) {
        result.errors.push_back({LoadError::Kind::parse, line_no, "", e.what()});
        continue;
      }
      Conversation c = conversation_from_json(j);
      conv_id = c.conversation_id;

      if (const auto it = overrides.find(conv_id); it != overrides.end()) {
        for (const SidecarOverride& o : it->second) {
          if (o.turn_index == -1) {
            c.goal_embedding = o.embedding;
          } else if (o.turn_index >= 0 &&
                     static_cast<std::size_t>(o.turn_index) < c.turns.size()) {
            c.turns[static_cast<std::size_t>(o.turn_index)].embedding = o.embedding;
          } else {
            throw DataError("sidecar turn_index " + std::to_string(o.turn_index) +
                            " out of range");
          }
        }
      }

      if (const auto it = seen_ids.find(conv_id); it != seen_ids.end()) {
        throw DataError("duplicate conversation_id (first seen on line " +
                        std::to_string(it->second) + ")");
      }
      validate_and_finish(c, options, corpus_dim);
      seen_ids.emplace(conv_id, line_no);
      result.conversations.push_back(std::move(c));
    } catch (const DataError& e) {
      result.errors.push_back({LoadError::Kind::validation, line_no, conv_id, e.what()});
    }
  }
  return result;
}

// ============================================================================
// Synthetic corpus
// ============================================================================

namespace {

const std::vector<std::string> kLatentIds = {
    "conversation_volatility", "conversation_drift_from_goal", "number_of_turns",
    "median_gap_time",         "avg_model_turn_duration",      "max_model_self_similarity",
    "judge_quality"};

const std::vector<std::string> kUseCases = {
    "Learning & Education",     "Accessibility Support",
    "Troubleshooting & Assistance", "Casual Interaction & Entertainment",
    "Creativity & Brainstorming",   "Information Seeking & Identification"};

std::vector<double> gaussian_vector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (double& x : v) x = gauss(rng);
  return v;
}

std::vector<double> random_unit(std::mt19937_64& rng, int dim) {
  for (;;) {
    std::vector<double> v = gaussian_vector(rng, dim);
    if (norm(v) > 1e-12) return normalized_unit(std::move(v));
  }
}

double standardize(double x, double lo, double hi) {
  if (hi <= lo) return 0.0;
  return 2.0 * (x - lo) / (hi - lo) - 1.0;
}

std::string pad3(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", v);
  return buf;
}

}  // namespace

std::span<const std::string> synthetic_latent_ids() { return kLatentIds; }

SyntheticResult generate_synthetic(const SyntheticSpec& spec) {
  if (spec.embedding_dim < 2) throw DataError("embedding_dim must be at least 2");
  if (spec.n_users < 1 || spec.conversations_per_user < 1) {
    throw DataError("n_users and conversations_per_user must be positive");
  }
  if (spec.volatility_range[1] < spec.volatility_range[0] ||
      spec.drift_range[1] < spec.drift_range[0]) {
    throw DataError("volatility_range and drift_range must be nonempty");
  }
  for (const auto& [key, _] : spec.truth_weights) {
    if (std::find(kLatentIds.begin(), kLatentIds.end(), key) == kLatentIds.end()) {
      throw DataError("unknown truth weight '" + key + "'");
    }
  }

  SyntheticResult result;
  result.truth.truth_weights = spec.truth_weights;
  result.truth.noise_sd = spec.noise_sd;
  result.truth.seed = spec.seed;

  auto weight = [&](const std::string& id) {
    const auto it = spec.truth_weights.find(id);
    return it == spec.truth_weights.end() ? 0.0 : it->second;
  };

  const int dim = spec.embedding_dim;
  for (int u = 0; u < spec.n_users; ++u) {
    const std::string user_id = "user-" + pad3(u);
    auto user_rng = make_rng(spec.seed, {2, static_cast<std::uint64_t>(u)});
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double intercept = spec.user_intercept_sd * gauss(user_rng);
    result.truth.user_intercepts[user_id] = intercept;

    for (int k = 0; k < spec.conversations_per_user; ++k) {
      auto rng = make_rng(spec.seed,
                          {1, static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(k)});
      std::uniform_real_distribution<double> unit(0.0, 1.0);

      Conversation c;
      c.conversation_id = "conv-" + pad3(u) + "-" + pad3(k);
      c.user_id = user_id;
      c.use_case = kUseCases[static_cast<std::size_t>(rng() % kUseCases.size())];
      c.goal_text = "synthetic goal for " + c.conversation_id;

      // Per-conversation latent knobs.
      const double volatility =
          spec.volatility_range[0] +
          unit(rng) * (spec.volatility_range[1] - spec.volatility_range[0]);
      const double drift =
          spec.drift_range[0] + unit(rng) * (spec.drift_range[1] - spec.drift_range[0]);
      const int exchanges = 2 + static_cast<int>(rng() % 7);  // 2..8
      const double pace_s = 0.5 + 5.5 * unit(rng);            // median gap target
      const double model_dur_s = 1.0 + 8.0 * unit(rng);
      const double judge_quality = 2.0 * unit(rng) - 1.0;

      std::vector<double> goal = random_unit(rng, dim);
      c.goal_embedding = goal;
      std::vector<double> drift_dir = random_unit(rng, dim);

      // Random walk on the unit sphere starting near the goal.
      std::vector<double> point(goal);
      {
        std::vector<double> g = gaussian_vector(rng, dim);
        for (int j = 0; j < dim; ++j) point[j] += 0.3 * volatility * g[j];
        point = normalized_unit(std::move(point));
      }

      bool any_repetition = false;
      std::optional<std::vector<double>> prev_model_emb;
      std::int64_t cursor_ms = 0;
      const double drift_step = 2.0 * drift / static_cast<double>(2 * exchanges);
      for (int e = 0; e < exchanges; ++e) {
        for (int half = 0; half < 2; ++half) {
          const bool is_user = half == 0;
          Turn t;
          t.role = is_user ? Role::user : Role::model;
          t.text = (is_user ? "user turn " : "model turn ") + std::to_string(e + 1) + " of " +
                   c.conversation_id;
          const double dur_s =
              is_user ? (1.5 + 4.0 * unit(rng)) : model_dur_s * (0.6 + 0.8 * unit(rng));
          if (e > 0 || half > 0) {
            cursor_ms += static_cast<std::int64_t>(1000.0 * pace_s * (0.5 + unit(rng)));
          }
          t.start_ms = cursor_ms;
          cursor_ms += static_cast<std::int64_t>(1000.0 * dur_s);
          t.end_ms = cursor_ms;

          std::vector<double> emb = point;
          if (!is_user && prev_model_emb && unit(rng) < spec.repetition_prob) {
            emb = *prev_model_emb;  // injected model repetition
            any_repetition = true;
          }
          if (!is_user) prev_model_emb = emb;
          t.embedding = std::move(emb);
          c.turns.push_back(std::move(t));

          std::vector<double> g = gaussian_vector(rng, dim);
          for (int j = 0; j < dim; ++j) {
            point[j] += volatility * g[j] + drift_step * drift_dir[j];
          }
          point = normalized_unit(std::move(point));
        }
      }

      std::map<std::string, double> latents;
      latents["conversation_volatility"] =
          standardize(volatility, spec.volatility_range[0], spec.volatility_range[1]);
      latents["conversation_drift_from_goal"] =
          standardize(drift, spec.drift_range[0], spec.drift_range[1]);
      latents["number_of_turns"] = standardize(static_cast<double>(exchanges), 2.0, 8.0);
      latents["median_gap_time"] = standardize(pace_s, 0.5, 6.0);
      latents["avg_model_turn_duration"] = standardize(model_dur_s, 1.0, 9.0);
      latents["max_model_self_similarity"] = any_repetition ? 1.0 : -1.0;
      latents["judge_quality"] = judge_quality;

      double score = 3.0 + intercept;
      for (const std::string& id : kLatentIds) score += weight(id) * latents.at(id);
      std::normal_distribution<double> conv_gauss(0.0, 1.0);
      const double noisy = score + spec.noise_sd * conv_gauss(rng);
      c.satisfaction = static_cast<int>(std::clamp<long>(std::lround(noisy), 1, 5));

      result.truth.latent_features[c.conversation_id] = std::move(latents);
      result.truth.truth_scores[c.conversation_id] = score;
      result.conversations.push_back(std::move(c));
    }
  }
  return result;
}

void save_truth_sidecar(const std::string& path, const SyntheticTruth& truth) {
  ordered_json j;
  j["truth_weights"] = truth.truth_weights;
  j["user_intercepts"] = truth.user_intercepts;
  j["noise_sd"] = truth.noise_sd;
  j["seed"] = truth.seed;
  j["latent_features"] = truth.latent_features;
  j["truth_scores"] = truth.truth_scores;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

SyntheticTruth load_truth_sidecar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open truth sidecar '" + path + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const ordered_json::parse_error& e) {
    throw DataError("truth sidecar: " + std::string(e.what()));
  }
  SyntheticTruth t;
  t.truth_weights = j.at("truth_weights").get<std::map<std::string, double>>();
  t.user_intercepts = j.at("user_intercepts").get<std::map<std::string, double>>();
  t.noise_sd = j.at("noise_sd").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("latent_features")) {
    t.latent_features =
        j["latent_features"].get<std::map<std::string, std::map<std::string, double>>>();
  }
  if (j.contains("truth_scores")) {
    t.truth_scores = j["truth_scores"].get<std::map<std::string, double>>();
  }
  return t;
}

// ============================================================================
// Category summary
// ============================================================================

std::vector<CategoryRow> category_summary(std::span<const Conversation> corpus) {
  if (corpus.empty()) throw DataError("category_summary needs a nonempty corpus");
  std::map<std::string, std::vector<double>> ratings;
  for (const Conversation& c : corpus) {
    ratings[c.use_case].push_back(static_cast<double>(c.satisfaction));
  }
  std::vector<CategoryRow> rows;
  for (const auto& [use_case, values] : ratings) {
    CategoryRow row;
    row.use_case = use_case;
    row.count = values.size();
    row.mean_satisfaction = mean_of(values);
    row.sd_satisfaction = sample_sd(values);
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const CategoryRow& a, const CategoryRow& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.use_case < b.use_case;
  });
  return rows;
}

std::span<const CategoryRow> reference_category_rows() {
  static const std::vector<CategoryRow> rows = {
      {"Learning & Education", 646, 2.47, 1.16},
      {"Accessibility Support", 417, 2.55, 1.18},
      {"Troubleshooting & Assistance", 411, 2.42, 1.12},
      {"Casual Interaction & Entertainment", 326, 2.45, 1.22},
      {"Creativity & Brainstorming", 176, 2.77, 1.08},
      {"Information Seeking & Identification", 142, 2.54, 1.21},
  };
  return rows;
}

// ============================================================================
// Fixture embedder
// ============================================================================

std::vector<double> pseudo_embedding(const std::string& text, std::size_t dim) {
  if (dim < 2) throw DataError("pseudo_embedding needs dim >= 2");
  auto fnv1a = [](const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) h = (h ^ ch) * 0x100000001b3ULL;
    return h;
  };
  std::vector<double> acc(dim, 0.0);
  std::istringstream tokens(text);
  std::string tok;
  bool any = false;
  while (tokens >> tok) {
    any = true;
    const std::uint64_t h = fnv1a(tok);
    for (std::size_t j = 0; j < dim; ++j) {
      const std::uint64_t m = splitmix64(h ^ (j + 1));
      acc[j] += static_cast<double>(m) / 9223372036854775808.0 - 1.0;  // ~U(-1, 1)
    }
  }
  if (!any) {
    const std::uint64_t h = fnv1a("");
    for (std::size_t j = 0; j < dim; ++j) {
      acc[j] = static_cast<double>(splitmix64(h ^ (j + 1))) / 9223372036854775808.0 - 1.0;
    }
  }
  return normalized_unit(std::move(acc));
}

}  // namespace trace
