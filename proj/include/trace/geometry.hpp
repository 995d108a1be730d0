#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "trace/corpus.hpp"

namespace trace {

// ============================================================================
// Embedding-space primitives
// ============================================================================

// 1 - (a.b)/(|a||b|), clamped to [0, 2] against float drift.
// Zero-norm inputs are a domain error.
double cosine_distance(std::span<const double> a, std::span<const double> b);

// (a.b)/(|a||b|), clamped to [-1, 1].
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Ordinary-least-squares slope of values against indices 1..n. Length >= 2.
double ols_slope(std::span<const double> values);

// Median (mean of the middle two for even length) and the median absolute
// deviation from it. Input must be nonempty.
std::pair<double, double> median_and_mad(std::span<const double> values);

// Mean cosine similarity of each qualifying user turn to the arithmetic mean
// of all preceding turn embeddings. The first user turn never qualifies.
// Throws NumericError when no turn qualifies.
double context_cohesion(const Conversation& conversation);

// ============================================================================
// Feature catalog
// ============================================================================

enum class FeatureCategory {
  inefficiency_repetition,
  temporal,
  cohesion_relevance,
  goal_orientation,
};

struct FeatureSpec {
  std::string id;            // stable snake_case identifier (column name)
  std::string display_name;
  FeatureCategory category;
  std::string min_requirements;  // structural precondition, human readable
};

// The full 30-entry catalog in its stable serialization order.
const std::vector<FeatureSpec>& feature_catalog();

// Column ids in catalog order.
const std::vector<std::string>& feature_ids();

// ============================================================================
// Feature vectors
// ============================================================================

// A conversation's structural signal vector. Every catalog id lands either in
// values (finite doubles only) or in missing; never both, never neither.
// Undefined features are recorded as missing, not as sentinel numbers.
struct FeatureVector {
  std::string conversation_id;
  std::map<std::string, double> values;
  std::set<std::string> missing;
};

struct ExtractionParams {
  int late_k = 4;      // window (utterances) for late conversation volatility
  double eps = 1e-9;   // division guard for the goal convergence ratio
};

FeatureVector extract_features(const Conversation& conversation,
                               const ExtractionParams& params = {});

// Parallel over conversations; output order matches input order and is
// independent of thread count.
std::vector<FeatureVector> extract_features_batch(std::span<const Conversation> corpus,
                                                  const ExtractionParams& params = {});

}  // namespace trace
