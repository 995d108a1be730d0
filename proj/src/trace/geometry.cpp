#include "trace/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "trace/error.hpp"
#include "trace/vec.hpp"

namespace trace {

// ============================================================================
// Primitives
// ============================================================================

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw NumericError("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()) + ")");
  }
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine: zero-norm input");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  return std::clamp(1.0 - cosine_similarity(a, b), 0.0, 2.0);
}

double ols_slope(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw NumericError("ols_slope needs at least two values");
  const double xbar = static_cast<double>(n + 1) / 2.0;
  double ybar = 0.0;
  for (double v : values) ybar += v;
  ybar /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i + 1) - xbar;
    num += dx * (values[i] - ybar);
    den += dx * dx;
  }
  return num / den;
}

std::pair<double, double> median_and_mad(std::span<const double> values) {
  if (values.empty()) throw NumericError("median_and_mad needs a nonempty input");
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  std::vector<double> v(values.begin(), values.end());
  const double med = median(v);
  for (double& x : v) x = std::abs(x - med);
  return {med, median(std::move(v))};
}

// ============================================================================
// Catalog
// ============================================================================

namespace {

std::vector<FeatureSpec> build_catalog() {
  using C = FeatureCategory;
  return {
      {"number_of_turns", "Number of Turns", C::inefficiency_repetition, "at least 1 turn"},
      {"model_self_similarity", "Model Self-Similarity", C::inefficiency_repetition,
       "at least 2 paired model turns with embeddings"},
      {"max_model_self_similarity", "Max Model Self-Similarity", C::inefficiency_repetition,
       "at least 2 paired model turns with embeddings"},
      {"avg_model_turn_duration", "Avg. Model Turn Duration", C::temporal,
       "at least 1 paired model turn"},
      {"avg_user_turn_duration", "Avg. User Turn Duration", C::temporal,
       "at least 1 user turn"},
      {"median_gap_time", "Median Gap Time", C::temporal, "at least 2 turns"},
      {"mad_gap_time", "MAD Gap Time", C::temporal, "at least 3 turns (2 gaps)"},
      {"initial_response_distance", "Initial Response Distance", C::cohesion_relevance,
       "first exchange complete, both embeddings"},
      {"avg_model_distance_from_user", "Avg. Model Distance from User", C::cohesion_relevance,
       "at least 1 complete exchange with embeddings"},
      {"max_model_distance_from_user", "Max Model Distance from User", C::cohesion_relevance,
       "at least 1 complete exchange with embeddings"},
      {"avg_user_distance_from_model", "Avg. User Distance from Model", C::cohesion_relevance,
       "a user turn beyond the first whose previous exchange has a model turn"},
      {"max_user_distance_from_model", "Max User Distance from Model", C::cohesion_relevance,
       "a user turn beyond the first whose previous exchange has a model turn"},
      {"min_model_distance_to_user_prompt", "Min Model Distance to User Prompt",
       C::cohesion_relevance, "at least 1 complete exchange with embeddings"},
      {"trend_in_model_relevance", "Trend in Model Relevance", C::cohesion_relevance,
       "at least 2 complete exchanges with embeddings"},
      {"semantic_cohesion", "Semantic Cohesion", C::cohesion_relevance,
       "a user turn beyond the first with full preceding-history embeddings"},
      {"conversation_volatility", "Conversation Volatility", C::cohesion_relevance,
       "at least 1 consecutive turn pair with embeddings"},
      {"max_turn_to_turn_distance", "Max Turn-to-Turn Distance", C::cohesion_relevance,
       "at least 1 consecutive turn pair with embeddings"},
      {"late_conversation_volatility", "Late Conversation Volatility", C::cohesion_relevance,
       "a consecutive turn pair with embeddings inside the final-k window"},
      {"user_self_consistency", "User Self-Consistency", C::cohesion_relevance,
       "at least 2 consecutive user turns with embeddings"},
      {"model_adherence_to_goal", "Model Adherence to Goal", C::goal_orientation,
       "goal embedding and a paired model turn with embedding"},
      {"user_adherence_to_goal", "User Adherence to Goal", C::goal_orientation,
       "goal embedding and a user turn with embedding"},
      {"min_model_distance_to_goal", "Min Model Distance to Goal", C::goal_orientation,
       "goal embedding and a paired model turn with embedding"},
      {"max_model_distance_from_goal", "Max Model Distance from Goal", C::goal_orientation,
       "goal embedding and a paired model turn with embedding"},
      {"final_turn_distance_from_goal", "Final Turn Distance from Goal", C::goal_orientation,
       "goal embedding and an embedding on the final turn"},
      {"final_model_response_to_goal_distance", "Final Model Response to Goal Distance",
       C::goal_orientation, "goal embedding and an embedding on the last paired model turn"},
      {"model_adherence_to_initial_prompt", "Model Adherence to Initial Prompt",
       C::goal_orientation,
       "first user turn with embedding and a paired model turn with embedding"},
      {"goal_vs_initial_prompt_distance", "Goal vs. Initial Prompt Distance",
       C::goal_orientation, "goal embedding and first user turn with embedding"},
      {"conversation_drift_from_goal", "Conversation Drift from Goal", C::goal_orientation,
       "goal embedding and embeddings on every turn"},
      {"trend_in_goal_adherence", "Trend in Goal Adherence", C::goal_orientation,
       "goal embedding and at least 2 paired model turns with embeddings"},
      {"goal_convergence_ratio", "Goal Convergence Ratio", C::goal_orientation,
       "goal embedding, final-turn embedding and a paired model turn with embedding"},
  };
}

}  // namespace

const std::vector<FeatureSpec>& feature_catalog() {
  static const std::vector<FeatureSpec> catalog = build_catalog();
  return catalog;
}

const std::vector<std::string>& feature_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> out;
    for (const FeatureSpec& f : feature_catalog()) out.push_back(f.id);
    return out;
  }();
  return ids;
}

// ============================================================================
// Extraction
// ============================================================================

namespace {

// Mean cosine similarity of user turns (beyond the first) to the arithmetic
// mean of all preceding turn embeddings. A qualifying turn contributes only
// when it and its full preceding history carry embeddings; an exactly
// zero-norm context mean cannot be compared and is skipped.
std::optional<double> cohesion_value(const Conversation& conv) {
  const auto& turns = conv.turns;
  std::optional<std::vector<double>> running_sum;
  bool prefix_complete = true;
  int users_seen = 0;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const auto& e = turns[i].embedding;
    if (turns[i].role == Role::user) {
      if (users_seen >= 1 && prefix_complete && e && running_sum) {
        std::vector<double> context(*running_sum);
        for (double& x : context) x /= static_cast<double>(i);
        if (norm(context) != 0.0) {
          total += cosine_similarity(*e, context);
          ++count;
        }
      }
      ++users_seen;
    }
    if (e) {
      if (!running_sum) running_sum = std::vector<double>(e->size(), 0.0);
      for (std::size_t j = 0; j < e->size(); ++j) (*running_sum)[j] += (*e)[j];
    } else {
      prefix_complete = false;
    }
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

}  // namespace

double context_cohesion(const Conversation& conversation) {
  const auto v = cohesion_value(conversation);
  if (!v) throw NumericError("context cohesion undefined: no qualifying user turn");
  return *v;
}

FeatureVector extract_features(const Conversation& conv, const ExtractionParams& params) {
  const auto& turns = conv.turns;
  const std::size_t n = turns.size();
  if (n == 0) throw DataError("conversation '" + conv.conversation_id + "' has no turns");
  if (params.late_k < 1) throw DataError("late_k must be at least 1");

  for (std::size_t i = 0; i < n; ++i) {
    if (turns[i].embedding && norm(*turns[i].embedding) == 0.0) {
      throw NumericError("zero-norm embedding on turn " + std::to_string(i) +
                         " of conversation '" + conv.conversation_id + "'");
    }
  }
  if (conv.goal_embedding && norm(*conv.goal_embedding) == 0.0) {
    throw NumericError("zero-norm goal embedding on conversation '" + conv.conversation_id +
                       "'");
  }

  const std::vector<ExchangePair> pairs = pair_exchanges(conv);
  const std::vector<double>* goal =
      conv.goal_embedding ? &*conv.goal_embedding : nullptr;

  auto emb = [&](std::size_t i) -> const std::vector<double>* {
    return turns[i].embedding ? &*turns[i].embedding : nullptr;
  };

  FeatureVector fv;
  fv.conversation_id = conv.conversation_id;
  auto set = [&](const std::string& id, double v) {
    if (!std::isfinite(v)) {
      throw NumericError("feature '" + id + "' is non-finite on conversation '" +
                         conv.conversation_id + "'");
    }
    fv.values[id] = v;
  };
  auto miss = [&](const std::string& id) { fv.missing.insert(id); };
  auto set_stat = [&](const std::string& id, const std::vector<double>& xs,
                      double (*reduce)(const std::vector<double>&)) {
    xs.empty() ? miss(id) : set(id, reduce(xs));
  };

  static const auto avg_r = +[](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  static const auto max_r =
      +[](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };
  static const auto min_r =
      +[](const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); };

  // ---- Inefficiency and repetition ----
  set("number_of_turns", static_cast<double>(n));

  std::vector<const std::vector<double>*> model_embs;  // paired model turns, pair order
  std::optional<std::size_t> last_paired_model;
  for (const ExchangePair& p : pairs) {
    if (!p.model_turn) continue;
    last_paired_model = *p.model_turn;
    if (const auto* e = emb(*p.model_turn)) model_embs.push_back(e);
  }
  if (model_embs.size() >= 2) {
    double total = 0.0, best = -2.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < model_embs.size(); ++i) {
      for (std::size_t j = i + 1; j < model_embs.size(); ++j) {
        const double sim = 1.0 - cosine_distance(*model_embs[i], *model_embs[j]);
        total += sim;
        best = std::max(best, sim);
        ++count;
      }
    }
    set("model_self_similarity", total / static_cast<double>(count));
    set("max_model_self_similarity", best);
  } else {
    miss("model_self_similarity");
    miss("max_model_self_similarity");
  }

  // ---- Temporal dynamics ----
  {
    std::vector<double> model_durs, user_durs;
    for (const ExchangePair& p : pairs) {
      user_durs.push_back(turns[p.user_turn].duration_seconds());
      if (p.model_turn) model_durs.push_back(turns[*p.model_turn].duration_seconds());
    }
    set_stat("avg_model_turn_duration", model_durs, avg_r);
    set_stat("avg_user_turn_duration", user_durs, avg_r);

    std::vector<double> gaps;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double g =
          static_cast<double>(turns[i + 1].start_ms - turns[i].end_ms) / 1000.0;
      gaps.push_back(std::max(0.0, g));
    }
    if (!gaps.empty()) {
      set("median_gap_time", median_and_mad(gaps).first);
    } else {
      miss("median_gap_time");
    }
    if (gaps.size() >= 2) {
      set("mad_gap_time", median_and_mad(gaps).second);
    } else {
      miss("mad_gap_time");
    }
  }

  // ---- Semantic cohesion and relevance ----
  {
    // d(M_i, U_i) over complete exchanges, in exchange order.
    std::vector<double> within;
    for (const ExchangePair& p : pairs) {
      const auto* ue = emb(p.user_turn);
      const auto* me = p.model_turn ? emb(*p.model_turn) : nullptr;
      if (ue && me) within.push_back(cosine_distance(*me, *ue));
    }
    if (!pairs.empty() && pairs[0].model_turn && emb(pairs[0].user_turn) &&
        emb(*pairs[0].model_turn)) {
      set("initial_response_distance",
          cosine_distance(*emb(*pairs[0].model_turn), *emb(pairs[0].user_turn)));
    } else {
      miss("initial_response_distance");
    }
    set_stat("avg_model_distance_from_user", within, avg_r);
    set_stat("max_model_distance_from_user", within, max_r);
    set_stat("min_model_distance_to_user_prompt", within, min_r);
    if (within.size() >= 2) {
      set("trend_in_model_relevance", ols_slope(within));
    } else {
      miss("trend_in_model_relevance");
    }

    // d(U_i, M_{i-1}) for exchanges beyond the first.
    std::vector<double> across;
    for (std::size_t i = 1; i < pairs.size(); ++i) {
      const auto* ue = emb(pairs[i].user_turn);
      const auto* pm = pairs[i - 1].model_turn ? emb(*pairs[i - 1].model_turn) : nullptr;
      if (ue && pm) across.push_back(cosine_distance(*ue, *pm));
    }
    set_stat("avg_user_distance_from_model", across, avg_r);
    set_stat("max_user_distance_from_model", across, max_r);

    const auto cohesion = cohesion_value(conv);
    cohesion ? set("semantic_cohesion", *cohesion) : miss("semantic_cohesion");

    // Turn-to-turn distances over the interleaved utterance sequence.
    std::vector<double> steps, late_steps;
    const std::size_t late_from =
        n > static_cast<std::size_t>(params.late_k) ? n - static_cast<std::size_t>(params.late_k)
                                                    : 1;  // 1-based i > n-k, with i >= 2
    for (std::size_t i = 1; i < n; ++i) {
      const auto* a = emb(i - 1);
      const auto* b = emb(i);
      if (!a || !b) continue;
      const double d = cosine_distance(*b, *a);
      steps.push_back(d);
      if (i + 1 > late_from) late_steps.push_back(d);  // i+1 is the 1-based index
    }
    set_stat("conversation_volatility", steps, avg_r);
    set_stat("max_turn_to_turn_distance", steps, max_r);
    set_stat("late_conversation_volatility", late_steps, avg_r);

    // Strictly consecutive user prompts; a missing embedding breaks the chain.
    std::vector<double> user_steps;
    const std::vector<double>* prev_user = nullptr;
    for (const ExchangePair& p : pairs) {
      const auto* ue = emb(p.user_turn);
      if (ue && prev_user) user_steps.push_back(cosine_distance(*ue, *prev_user));
      prev_user = ue;
    }
    set_stat("user_self_consistency", user_steps, avg_r);
  }

  // ---- Goal orientation ----
  {
    std::vector<double> model_goal;
    if (goal) {
      for (const auto* e : model_embs) model_goal.push_back(cosine_distance(*e, *goal));
    }
    set_stat("model_adherence_to_goal", model_goal, avg_r);
    set_stat("min_model_distance_to_goal", model_goal, min_r);
    set_stat("max_model_distance_from_goal", model_goal, max_r);
    if (model_goal.size() >= 2) {
      set("trend_in_goal_adherence", ols_slope(model_goal));
    } else {
      miss("trend_in_goal_adherence");
    }

    std::vector<double> user_goal;
    if (goal) {
      for (const ExchangePair& p : pairs) {
        if (const auto* e = emb(p.user_turn)) user_goal.push_back(cosine_distance(*e, *goal));
      }
    }
    set_stat("user_adherence_to_goal", user_goal, avg_r);

    if (goal && emb(n - 1)) {
      set("final_turn_distance_from_goal", cosine_distance(*emb(n - 1), *goal));
    } else {
      miss("final_turn_distance_from_goal");
    }
    if (goal && last_paired_model && emb(*last_paired_model)) {
      set("final_model_response_to_goal_distance",
          cosine_distance(*emb(*last_paired_model), *goal));
    } else {
      miss("final_model_response_to_goal_distance");
    }

    const std::vector<double>* first_user =
        !pairs.empty() ? emb(pairs[0].user_turn) : nullptr;
    if (first_user && !model_embs.empty()) {
      double total = 0.0;
      for (const auto* e : model_embs) total += cosine_distance(*e, *first_user);
      set("model_adherence_to_initial_prompt",
          total / static_cast<double>(model_embs.size()));
    } else {
      miss("model_adherence_to_initial_prompt");
    }
    if (goal && first_user) {
      set("goal_vs_initial_prompt_distance", cosine_distance(*goal, *first_user));
    } else {
      miss("goal_vs_initial_prompt_distance");
    }

    // Unnormalized mean of every turn embedding vs the goal.
    bool all_embedded = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (!emb(i)) {
        all_embedded = false;
        break;
      }
    }
    if (goal && all_embedded) {
      std::vector<double> mean(emb(0)->size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += (*emb(i))[j];
      }
      for (double& x : mean) x /= static_cast<double>(n);
      if (norm(mean) != 0.0) {
        set("conversation_drift_from_goal", cosine_distance(mean, *goal));
      } else {
        miss("conversation_drift_from_goal");
      }
    } else {
      miss("conversation_drift_from_goal");
    }

    if (goal && emb(n - 1) && !model_goal.empty()) {
      const double final_d = cosine_distance(*emb(n - 1), *goal);
      const double floor = std::max(min_r(model_goal), params.eps);
      set("goal_convergence_ratio", final_d / floor);
    } else {
      miss("goal_convergence_ratio");
    }
  }

  return fv;
}

std::vector<FeatureVector> extract_features_batch(std::span<const Conversation> corpus,
                                                  const ExtractionParams& params) {
  std::vector<FeatureVector> out(corpus.size());
  std::vector<std::string> errors(corpus.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(corpus.size()); ++i) {
    try {
      out[static_cast<std::size_t>(i)] =
          extract_features(corpus[static_cast<std::size_t>(i)], params);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const std::string& e : errors) {
    if (!e.empty()) throw NumericError(e);  // first failure in input order
  }
  return out;
}

}  // namespace trace
