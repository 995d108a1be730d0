#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "trace/corpus.hpp"
#include "trace/forest.hpp"
#include "trace/table.hpp"

namespace trace {

// ============================================================================
// Preference pairs
// ============================================================================

// Winner strictly out-rates loser. Pairs are within-user by default; per-user
// rating scales make cross-user comparisons ill-posed, so the cross_user flag
// exists for study only.
struct PreferencePair {
  std::string winner_id;
  std::string loser_id;
  std::string user_id;
};

struct BuildPairsOptions {
  int min_pairs_per_user = 1;
  bool cross_user = false;  // study flag; rejected by fold-based evaluation
};

struct BuildPairsResult {
  std::vector<PreferencePair> pairs;  // eligible users' pairs, user-sorted
  std::vector<std::string> eligible_users;
};

BuildPairsResult build_pairs(std::span<const Conversation> corpus,
                             const BuildPairsOptions& options = {});
// Same pairing over an extracted feature table (satisfaction + user_id columns).
BuildPairsResult build_pairs(const FeatureTable& table,
                             const BuildPairsOptions& options = {});

// ============================================================================
// Scorers
// ============================================================================

enum class ScorerKind {
  trace_forest,   // retrains a forest on the other users' rows per fold
  llm_score,      // precomputed per-conversation scores, no training
  hybrid_forest,  // forest over the table extended with the llm_score column
};

const char* scorer_kind_name(ScorerKind kind);

struct ScorerSpec {
  ScorerKind kind = ScorerKind::trace_forest;
  // Required for llm_score (the scores themselves). Unused by forest kinds;
  // hybrid tables carry the judge column already.
  std::map<std::string, double> scores;
};

// ============================================================================
// Reports
// ============================================================================

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

// Two-sided paired t-test on per-user differences. Zero-variance differences
// degenerate to t=0, p=1 (all-zero) or |t|=inf, p=0 (nonzero mean).
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

struct UserAccuracy {
  std::size_t n_pairs = 0;
  double accuracy = 0.0;
};

struct PreferenceEvalReport {
  std::string scorer_name;
  std::map<std::string, UserAccuracy> per_user;
  double mean_accuracy = 0.0;  // over per-user accuracies, not pooled pairs
  double sd_accuracy = 0.0;    // sample sd across users
  std::size_t total_pairs = 0;
  // +1 winner preferred, 0 tie, -1 loser preferred; aligned with input pairs.
  std::vector<int> pair_outcomes;
  std::map<std::string, double> conversation_scores;
};

struct LouoConfig {
  ForestConfig forest;
  std::uint64_t seed = 0;  // fans out to deterministic per-fold forest seeds
};

// Leave-one-user-out evaluation: forest scorers retrain per fold on every
// conversation of the other users; each held-out conversation is scored once;
// a pair scores 1 when the winner's score is higher, 0.5 on an exact tie.
PreferenceEvalReport evaluate_louo(const FeatureTable& table,
                                   std::span<const PreferencePair> pairs,
                                   const ScorerSpec& scorer, const LouoConfig& config = {});

// Convenience for calibration scorers: evaluates precomputed scores directly.
PreferenceEvalReport evaluate_scores(const std::map<std::string, double>& scores,
                                     std::span<const PreferencePair> pairs,
                                     const std::string& scorer_name);

// ============================================================================
// Comparison (accuracy table, paired tests, disagreement rates)
// ============================================================================

struct ComparisonRow {
  std::string scorer;
  double mean_pct = 0.0;
  double sd_pct = 0.0;
  std::size_t total_pairs = 0;
};

struct PairwiseComparison {
  std::string scorer_a;
  std::string scorer_b;
  TTestResult test;
  double disagreement = 0.0;  // share of pairs predicted differently
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::vector<PairwiseComparison> comparisons;
};

// All reports must share the eligible user set and the pair sequence.
ComparisonTable compare_report(std::span<const PreferenceEvalReport> reports);

std::string comparison_to_csv(const ComparisonTable& table);

// ============================================================================
// Reference results from the original study (76 users, 5,423 pairs).
// Documentation constants for report context, never test targets.
// ============================================================================

struct ReferenceRow {
  const char* scorer;
  double mean_pct;
  double sd_pct;
};

std::span<const ReferenceRow> reference_accuracy_rows();
double reference_disagreement_rate();  // TRACE vs LLM predictions

}  // namespace trace
