#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace trace {

// ============================================================================
// Conversation data model
// ============================================================================

enum class Role { user, model };

struct Turn {
  Role role = Role::user;
  std::optional<std::string> text;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::optional<std::vector<double>> embedding;

  double duration_seconds() const {
    return static_cast<double>(end_ms - start_ms) / 1000.0;
  }
};

struct Conversation {
  std::string conversation_id;
  std::string user_id;
  std::string use_case;
  std::optional<std::string> goal_text;
  std::optional<std::vector<double>> goal_embedding;
  int satisfaction = 0;  // 1..5
  std::vector<Turn> turns;
};

// The i-th user prompt together with the model response that answers it:
// the first model turn after the user turn and before the next user turn.
// Turns are referenced by index into Conversation::turns.
struct ExchangePair {
  int index = 0;  // 1-based exchange number
  std::size_t user_turn = 0;
  std::optional<std::size_t> model_turn;
};

std::vector<ExchangePair> pair_exchanges(const Conversation& conversation);

// ============================================================================
// Ingestion
// ============================================================================

struct IngestOptions {
  bool normalize = true;  // unit-normalize all embeddings on load
  // Ratings are stored as 1..5. Files coded 0..4 load with rating_offset = 1;
  // reinterpretation never happens silently.
  int rating_offset = 0;
  // Optional sidecar of embedding overrides, one JSON object per line:
  //   {"conversation_id": ..., "turn_index": i (-1 for goal), "embedding": [...]}
  std::optional<std::string> sidecar_path;
};

struct LoadError {
  enum class Kind { parse, validation };
  Kind kind = Kind::parse;
  std::size_t line = 0;  // 1-based line number in the input file
  std::string conversation_id;
  std::string message;
};

// Ingestion is total: every input line lands either in conversations or in
// errors, never silently dropped.
struct LoadResult {
  std::vector<Conversation> conversations;
  std::vector<LoadError> errors;
};

LoadResult load_corpus(const std::string& path, const IngestOptions& options = {});

// One JSON object per line, fixed key order; writing then reloading then
// writing again is byte-identical.
void save_corpus(const std::string& path, std::span<const Conversation> corpus);

std::string conversation_to_json_line(const Conversation& conversation);

// ============================================================================
// Synthetic corpus generation
// ============================================================================

// Desk-scale stand-in for a real corpus: embeddings follow a random walk on
// the unit sphere with per-conversation volatility and goal drift, and the
// satisfaction rating is a planted linear function of latent knobs so tests
// can check recovery against known ground truth.
//
// truth_weights is keyed by the feature each latent knob drives:
//   conversation_volatility, conversation_drift_from_goal, number_of_turns,
//   median_gap_time, avg_model_turn_duration, max_model_self_similarity,
// plus "judge_quality", a latent invisible to the geometry (used to emulate
// a signal only an external judge can see). Latents are standardized to
// [-1, 1] before weighting.
struct SyntheticSpec {
  int n_users = 20;
  int conversations_per_user = 25;
  int embedding_dim = 16;
  std::array<double, 2> volatility_range{0.05, 0.60};
  std::array<double, 2> drift_range{0.00, 0.50};
  double repetition_prob = 0.10;
  double noise_sd = 0.30;
  double user_intercept_sd = 0.25;
  std::uint64_t seed = 1;
  std::map<std::string, double> truth_weights;
};

struct SyntheticTruth {
  std::map<std::string, double> truth_weights;
  std::map<std::string, double> user_intercepts;       // by user_id
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
  // Per-conversation diagnostics for planted-truth oracles.
  std::map<std::string, std::map<std::string, double>> latent_features;
  std::map<std::string, double> truth_scores;  // pre-noise rating value
};

struct SyntheticResult {
  std::vector<Conversation> conversations;
  SyntheticTruth truth;
};

SyntheticResult generate_synthetic(const SyntheticSpec& spec);

void save_truth_sidecar(const std::string& path, const SyntheticTruth& truth);
SyntheticTruth load_truth_sidecar(const std::string& path);

// Latent ids generate_synthetic understands in truth_weights.
std::span<const std::string> synthetic_latent_ids();

// ============================================================================
// Category summaries
// ============================================================================

struct CategoryRow {
  std::string use_case;
  std::size_t count = 0;
  double mean_satisfaction = 0.0;
  double sd_satisfaction = 0.0;  // sample sd, 0 for a single conversation
};

// One row per distinct use case, descending by count (ties alphabetical).
std::vector<CategoryRow> category_summary(std::span<const Conversation> corpus);

// Per-category satisfaction summary reported for the original study's corpus
// (~2,100 conversations). Documentation constants, not reproducible targets.
std::span<const CategoryRow> reference_category_rows();

// ============================================================================
// Fixture embedder
// ============================================================================

// Deterministic token-hash pseudo-embedding for fixtures and demos only.
// It carries no semantics; real corpora must ship their own embeddings.
std::vector<double> pseudo_embedding(const std::string& text, std::size_t dim);

}  // namespace trace
