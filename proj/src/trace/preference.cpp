#include "trace/preference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "trace/error.hpp"
#include "trace/numeric.hpp"
#include "trace/rng.hpp"
#include "trace/special.hpp"

namespace trace {

// ============================================================================
// Pair construction
// ============================================================================

namespace {

struct RatedConversation {
  std::string conversation_id;
  std::string user_id;
  double rating = 0.0;
};

BuildPairsResult build_pairs_impl(std::vector<RatedConversation> convs,
                                  const BuildPairsOptions& options) {
  // Group by user, preserving input order within each user.
  std::map<std::string, std::vector<const RatedConversation*>> by_user;
  for (const RatedConversation& c : convs) by_user[c.user_id].push_back(&c);

  BuildPairsResult result;
  for (const auto& [user, items] : by_user) {
    std::vector<PreferencePair> user_pairs;
    for (std::size_t i = 0; i < items.size(); ++i) {
      for (std::size_t j = i + 1; j < items.size(); ++j) {
        if (items[i]->rating == items[j]->rating) continue;
        const bool i_wins = items[i]->rating > items[j]->rating;
        user_pairs.push_back({i_wins ? items[i]->conversation_id : items[j]->conversation_id,
                              i_wins ? items[j]->conversation_id : items[i]->conversation_id,
                              user});
      }
    }
    if (static_cast<int>(user_pairs.size()) >= options.min_pairs_per_user) {
      result.eligible_users.push_back(user);
      result.pairs.insert(result.pairs.end(), user_pairs.begin(), user_pairs.end());
    }
  }

  if (options.cross_user) {
    // Study-only extension: pairs across users, attributed to the winner's
    // user. Fold-based evaluation rejects these.
    for (std::size_t i = 0; i < convs.size(); ++i) {
      for (std::size_t j = i + 1; j < convs.size(); ++j) {
        if (convs[i].user_id == convs[j].user_id) continue;
        if (convs[i].rating == convs[j].rating) continue;
        const bool i_wins = convs[i].rating > convs[j].rating;
        const RatedConversation& w = i_wins ? convs[i] : convs[j];
        const RatedConversation& l = i_wins ? convs[j] : convs[i];
        result.pairs.push_back({w.conversation_id, l.conversation_id, w.user_id});
      }
    }
  }
  return result;
}

}  // namespace

BuildPairsResult build_pairs(std::span<const Conversation> corpus,
                             const BuildPairsOptions& options) {
  std::vector<RatedConversation> convs;
  convs.reserve(corpus.size());
  for (const Conversation& c : corpus) {
    convs.push_back({c.conversation_id, c.user_id, static_cast<double>(c.satisfaction)});
  }
  return build_pairs_impl(std::move(convs), options);
}

BuildPairsResult build_pairs(const FeatureTable& table, const BuildPairsOptions& options) {
  std::vector<RatedConversation> convs;
  convs.reserve(table.rows.size());
  for (const TableRow& row : table.rows) {
    if (!row.satisfaction) {
      throw DataError("row '" + row.conversation_id + "' has no satisfaction rating");
    }
    convs.push_back({row.conversation_id, row.user_id, *row.satisfaction});
  }
  return build_pairs_impl(std::move(convs), options);
}

// ============================================================================
// Paired t-test
// ============================================================================

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("paired_t_test: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw DataError("paired_t_test needs at least 2 paired observations");
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  const double md = mean_of(diff);
  const double sd = sample_sd(diff);
  TTestResult result;
  result.df = static_cast<double>(n - 1);
  if (sd == 0.0) {
    if (md == 0.0) {
      result.t = 0.0;
      result.p = 1.0;
    } else {
      result.t = md > 0.0 ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
      result.p = 0.0;
    }
    return result;
  }
  result.t = md / (sd / std::sqrt(static_cast<double>(n)));
  result.p = student_t_two_sided_p(result.t, result.df);
  return result;
}

// ============================================================================
// Evaluation
// ============================================================================

namespace {

const char* kScorerNames[] = {"trace_forest", "llm_score", "hybrid_forest"};

PreferenceEvalReport score_pairs(const std::map<std::string, double>& scores,
                                 std::span<const PreferencePair> pairs,
                                 const std::string& scorer_name) {
  PreferenceEvalReport report;
  report.scorer_name = scorer_name;
  report.conversation_scores = scores;
  report.pair_outcomes.reserve(pairs.size());

  std::map<std::string, std::pair<std::size_t, double>> tally;  // user -> (n, credit)
  for (const PreferencePair& pair : pairs) {
    const auto w = scores.find(pair.winner_id);
    const auto l = scores.find(pair.loser_id);
    if (w == scores.end() || l == scores.end()) {
      throw DataError("no score for conversation '" +
                      (w == scores.end() ? pair.winner_id : pair.loser_id) + "'");
    }
    int outcome = 0;
    if (w->second > l->second) outcome = 1;
    if (w->second < l->second) outcome = -1;
    report.pair_outcomes.push_back(outcome);
    auto& [n, credit] = tally[pair.user_id];
    ++n;
    credit += outcome == 1 ? 1.0 : (outcome == 0 ? 0.5 : 0.0);
  }

  std::vector<double> accuracies;
  for (const auto& [user, t] : tally) {
    UserAccuracy ua;
    ua.n_pairs = t.first;
    ua.accuracy = t.second / static_cast<double>(t.first);
    report.per_user[user] = ua;
    report.total_pairs += t.first;
    accuracies.push_back(ua.accuracy);
  }
  report.mean_accuracy = mean_of(accuracies);
  report.sd_accuracy = sample_sd(accuracies);
  return report;
}

}  // namespace

const char* scorer_kind_name(ScorerKind kind) {
  return kScorerNames[static_cast<int>(kind)];
}

PreferenceEvalReport evaluate_scores(const std::map<std::string, double>& scores,
                                     std::span<const PreferencePair> pairs,
                                     const std::string& scorer_name) {
  return score_pairs(scores, pairs, scorer_name);
}

PreferenceEvalReport evaluate_louo(const FeatureTable& table,
                                   std::span<const PreferencePair> pairs,
                                   const ScorerSpec& scorer, const LouoConfig& config) {
  // Row lookup and per-user grouping.
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (!row_of.emplace(table.rows[i].conversation_id, i).second) {
      throw DataError("duplicate conversation_id '" + table.rows[i].conversation_id +
                      "' in feature table");
    }
  }
  for (const PreferencePair& pair : pairs) {
    for (const std::string* id : {&pair.winner_id, &pair.loser_id}) {
      if (!row_of.count(*id)) {
        throw DataError("pair references conversation '" + *id + "' missing from the table");
      }
    }
  }

  std::set<std::string> eligible;
  for (const PreferencePair& pair : pairs) eligible.insert(pair.user_id);

  if (scorer.kind == ScorerKind::llm_score) {
    // No training: compare judge scores directly. Coverage must span every
    // conversation of every eligible user plus everything the pairs touch.
    std::vector<std::string> missing;
    auto require = [&](const std::string& id) {
      if (!scorer.scores.count(id)) missing.push_back(id);
    };
    for (const TableRow& row : table.rows) {
      if (eligible.count(row.user_id)) require(row.conversation_id);
    }
    for (const PreferencePair& pair : pairs) {
      require(pair.winner_id);
      require(pair.loser_id);
    }
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    if (!missing.empty()) {
      std::ostringstream os;
      os << "judge scores missing for " << missing.size() << " conversation(s):";
      for (const std::string& id : missing) os << ' ' << id;
      throw DataError(os.str());
    }
    return score_pairs(scorer.scores, pairs, scorer_kind_name(scorer.kind));
  }

  // Forest-backed scorers: leave-one-user-out retraining.
  if (scorer.kind == ScorerKind::trace_forest && table.columns != feature_ids()) {
    throw DataError("trace_forest expects the standard feature catalog");
  }
  if (scorer.kind == ScorerKind::hybrid_forest &&
      !table.column_index("llm_score")) {
    throw DataError("hybrid_forest expects a table carrying the llm_score column");
  }
  for (const PreferencePair& pair : pairs) {
    const std::string& loser_user = table.rows[row_of.at(pair.loser_id)].user_id;
    if (loser_user != pair.user_id) {
      throw DataError("fold-based evaluation cannot score cross-user pairs; "
                      "use an independent scorer");
    }
  }

  std::vector<std::string> fold_users(eligible.begin(), eligible.end());
  std::map<std::string, double> fold_scores;

  std::vector<std::map<std::string, double>> per_fold(fold_users.size());
  std::vector<std::string> fold_errors(fold_users.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t f = 0; f < static_cast<std::int64_t>(fold_users.size()); ++f) {
    try {
      const std::string& held_out = fold_users[static_cast<std::size_t>(f)];
      FeatureTable train;
      train.columns = table.columns;
      std::vector<double> targets;
      std::vector<std::size_t> test_rows;
      for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const TableRow& row = table.rows[i];
        if (row.user_id == held_out) {
          test_rows.push_back(i);
          continue;
        }
        if (!row.satisfaction) {
          throw DataError("training row '" + row.conversation_id + "' has no rating");
        }
        train.rows.push_back(row);
        targets.push_back(*row.satisfaction);
      }
      // Fold hygiene: nothing by the held-out user may leak into training.
      for (const TableRow& row : train.rows) {
        if (row.user_id == held_out) throw Error("fold hygiene violated");
      }
      ForestConfig fc = config.forest;
      fc.seed = derive_seed(config.seed, {0xF01DULL, static_cast<std::uint64_t>(f)});
      const ForestModel model = train_forest(train, targets, fc);

      FeatureTable test;
      test.columns = table.columns;
      for (std::size_t i : test_rows) test.rows.push_back(table.rows[i]);
      const std::vector<double> preds = predict_table(model, test);
      auto& out = per_fold[static_cast<std::size_t>(f)];
      for (std::size_t k = 0; k < test.rows.size(); ++k) {
        out[test.rows[k].conversation_id] = preds[k];
      }
    } catch (const std::exception& e) {
      fold_errors[static_cast<std::size_t>(f)] = e.what();
    }
  }
  for (const std::string& e : fold_errors) {
    if (!e.empty()) throw DataError(e);
  }
  for (const auto& fold : per_fold) fold_scores.insert(fold.begin(), fold.end());

  return score_pairs(fold_scores, pairs, scorer_kind_name(scorer.kind));
}

// ============================================================================
// Comparison
// ============================================================================

ComparisonTable compare_report(std::span<const PreferenceEvalReport> reports) {
  if (reports.empty()) throw DataError("compare_report needs at least one report");
  const PreferenceEvalReport& first = reports[0];
  auto users_of = [](const PreferenceEvalReport& r) {
    std::vector<std::string> users;
    for (const auto& [user, _] : r.per_user) users.push_back(user);
    return users;
  };
  const std::vector<std::string> users = users_of(first);
  for (const PreferenceEvalReport& r : reports) {
    if (users_of(r) != users) {
      throw DataError("reports cover different user sets; cannot compare");
    }
    if (r.pair_outcomes.size() != first.pair_outcomes.size()) {
      throw DataError("reports cover different pair sequences; cannot compare");
    }
  }

  ComparisonTable table;
  for (const PreferenceEvalReport& r : reports) {
    table.rows.push_back(
        {r.scorer_name, 100.0 * r.mean_accuracy, 100.0 * r.sd_accuracy, r.total_pairs});
  }
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (std::size_t j = i + 1; j < reports.size(); ++j) {
      std::vector<double> acc_a, acc_b;
      for (const std::string& user : users) {
        acc_a.push_back(reports[i].per_user.at(user).accuracy);
        acc_b.push_back(reports[j].per_user.at(user).accuracy);
      }
      PairwiseComparison cmp;
      cmp.scorer_a = reports[i].scorer_name;
      cmp.scorer_b = reports[j].scorer_name;
      cmp.test = paired_t_test(acc_a, acc_b);
      std::size_t different = 0;
      for (std::size_t k = 0; k < first.pair_outcomes.size(); ++k) {
        if (reports[i].pair_outcomes[k] != reports[j].pair_outcomes[k]) ++different;
      }
      cmp.disagreement = first.pair_outcomes.empty()
                             ? 0.0
                             : static_cast<double>(different) /
                                   static_cast<double>(first.pair_outcomes.size());
      table.comparisons.push_back(std::move(cmp));
    }
  }
  return table;
}

std::string comparison_to_csv(const ComparisonTable& table) {
  std::ostringstream out;
  out << "scorer,mean_accuracy_pct,sd_accuracy_pct,total_pairs\n";
  char buf[64];
  for (const ComparisonRow& row : table.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.2f,%.2f,%zu\n", row.scorer.c_str(), row.mean_pct,
                  row.sd_pct, row.total_pairs);
    out << buf;
  }
  return out.str();
}

// ============================================================================
// Reference results
// ============================================================================

namespace {
const ReferenceRow kReferenceRows[] = {
    {"llm_only", 70.04, 20.14},
    {"trace_only", 68.20, 16.10},
    {"hybrid", 80.17, 17.10},
};
}

std::span<const ReferenceRow> reference_accuracy_rows() { return kReferenceRows; }

double reference_disagreement_rate() { return 0.387; }

}  // namespace trace
