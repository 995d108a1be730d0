// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Thresholds are pinned in code; every expected value comes from an
// independent oracle (brute-force re-implementation, planted synthetic truth,
// closed-form statistics) rather than from the implementation under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "reference_features.hpp"
#include "support/golden_templates.hpp"
#include "support/test_data.hpp"
#include "trace/corpus.hpp"
#include "trace/forest.hpp"
#include "trace/geometry.hpp"
#include "trace/llm_bridge.hpp"
#include "trace/numeric.hpp"
#include "trace/preference.hpp"
#include "trace/stats.hpp"
#include "trace/table.hpp"

namespace fs = std::filesystem;
using namespace trace;

namespace {

int g_failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, title,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point from) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - from).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

// ----------------------------------------------------------------------------
// 1. Feature oracle equivalence
// ----------------------------------------------------------------------------

void criterion_1() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(0xACCE97);
  std::size_t checked = 0;
  double worst = 0.0;
  bool consistent = true;
  for (int i = 0; i < 1000; ++i) {
    const Conversation conv = trace_test::random_conversation(rng, 8, 3, 12);
    const FeatureVector fv = extract_features(conv);
    const auto oracle = trace_reference::reference_features(conv);
    if (fv.values.size() != oracle.size()) consistent = false;
    for (const auto& [id, expected] : oracle) {
      const auto it = fv.values.find(id);
      if (it == fv.values.end()) {
        consistent = false;
        continue;
      }
      worst = std::max(worst, std::abs(it->second - expected));
      ++checked;
    }
  }
  const double secs = elapsed_s(start);
  const bool pass = consistent && worst <= 1e-9 && secs < 10.0;
  report(1, "feature oracle equivalence, 1000 random conversations", pass,
         fmt("%zu values, max |delta| = %.2e, %.2f s", checked, worst, secs));
}

// ----------------------------------------------------------------------------
// 2. Geometry invariances
// ----------------------------------------------------------------------------

void criterion_2() {
  std::mt19937_64 rng(0xD07A7E);
  std::uniform_real_distribution<double> scale_dist(0.05, 20.0);
  double worst = 0.0;
  bool structure_ok = true;
  for (int t = 0; t < 100; ++t) {
    const Conversation base = trace_test::random_conversation(rng, 8, 3, 12);
    const auto rotation = trace_test::random_rotation(rng, 8);
    const Conversation moved =
        trace_test::transform_conversation(base, rotation, scale_dist(rng));
    const FeatureVector a = extract_features(base);
    const FeatureVector b = extract_features(moved);
    if (a.missing != b.missing || a.values.size() != b.values.size()) structure_ok = false;
    for (const auto& [id, value] : a.values) {
      const auto it = b.values.find(id);
      if (it == b.values.end()) {
        structure_ok = false;
        continue;
      }
      worst = std::max(worst, std::abs(it->second - value));
    }
  }
  const bool pass = structure_ok && worst <= 1e-9;
  report(2, "rotation and positive-scaling invariance over 100 transforms", pass,
         fmt("max |delta| = %.2e", worst));
}

// ----------------------------------------------------------------------------
// 3. Forest sanity
// ----------------------------------------------------------------------------

SyntheticResult planted_corpus(std::uint64_t seed, int users, int per_user) {
  SyntheticSpec spec;
  spec.n_users = users;
  spec.conversations_per_user = per_user;
  spec.embedding_dim = 8;
  spec.noise_sd = 0.3;
  spec.user_intercept_sd = 0.15;
  spec.seed = seed;
  spec.truth_weights["conversation_volatility"] = -1.0;
  spec.truth_weights["median_gap_time"] = -0.8;
  spec.truth_weights["avg_model_turn_duration"] = 0.7;
  return generate_synthetic(spec);
}

void criterion_3() {
  const SyntheticResult r = planted_corpus(4242, 25, 20);  // 500 conversations
  const FeatureTable table =
      features_to_table(extract_features_batch(r.conversations), r.conversations);
  std::vector<double> targets;
  for (const auto& c : r.conversations) targets.push_back(c.satisfaction);

  ForestConfig fc;
  fc.n_trees = 200;
  fc.seed = 4242;
  OobStats oob;
  train_forest(table, targets, fc, &oob);

  const BuildPairsResult pairs = build_pairs(r.conversations);
  LouoConfig lc;
  lc.forest.n_trees = 200;
  lc.seed = 4242;
  const PreferenceEvalReport louo =
      evaluate_louo(table, pairs.pairs, {ScorerKind::trace_forest, {}}, lc);

  // constant-target degenerate case
  const std::vector<double> constant(table.rows.size(), 3.0);
  ForestConfig small = fc;
  small.n_trees = 20;
  const ForestModel flat = train_forest(table, constant, small);
  const std::vector<double> flat_pred = predict_table(flat, table);
  bool constant_exact = true;
  for (double p : flat_pred) constant_exact &= p == 3.0;

  const bool pass = oob.r2 >= 0.5 && louo.mean_accuracy >= 0.75 && constant_exact;
  report(3, "forest sanity on the 500-conversation planted corpus", pass,
         fmt("oob R2 = %.3f (>= 0.5), louo accuracy = %.3f (>= 0.75), constant exact = %s",
             oob.r2, louo.mean_accuracy, constant_exact ? "yes" : "no"));
}

// ----------------------------------------------------------------------------
// 4. Evaluation harness calibration
// ----------------------------------------------------------------------------

void criterion_4() {
  const SyntheticResult r = planted_corpus(52, 40, 25);
  const BuildPairsResult pairs = build_pairs(r.conversations);
  std::map<std::string, double> oracle, anti, constant;
  for (const auto& c : r.conversations) {
    oracle[c.conversation_id] = c.satisfaction;
    anti[c.conversation_id] = -c.satisfaction;
    constant[c.conversation_id] = 0.25;
  }
  const PreferenceEvalReport ro = evaluate_scores(oracle, pairs.pairs, "oracle");
  const PreferenceEvalReport ra = evaluate_scores(anti, pairs.pairs, "anti");
  const PreferenceEvalReport rc = evaluate_scores(constant, pairs.pairs, "constant");

  double random_mean = 0.0;
  const int n_scorers = 10;
  for (int s = 0; s < n_scorers; ++s) {
    std::mt19937_64 rng(9000 + s);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::map<std::string, double> random_scores;
    for (const auto& c : r.conversations) random_scores[c.conversation_id] = unit(rng);
    const PreferenceEvalReport rr = evaluate_scores(random_scores, pairs.pairs, "random");
    double pooled = 0.0;
    for (int o : rr.pair_outcomes) pooled += o == 1 ? 1.0 : (o == 0 ? 0.5 : 0.0);
    random_mean += pooled / static_cast<double>(rr.pair_outcomes.size());
  }
  random_mean /= n_scorers;

  const bool pass = pairs.pairs.size() >= 5000 && ro.mean_accuracy == 1.0 &&
                    ra.mean_accuracy == 0.0 && rc.mean_accuracy == 0.5 &&
                    std::abs(random_mean - 0.5) <= 0.03;
  report(4, "harness calibration: oracle / anti / constant / random scorers", pass,
         fmt("%zu pairs, oracle %.1f%%, anti %.1f%%, constant %.1f%%, random mean %.2f%%",
             pairs.pairs.size(), 100.0 * ro.mean_accuracy, 100.0 * ra.mean_accuracy,
             100.0 * rc.mean_accuracy, 100.0 * random_mean));
}

// ----------------------------------------------------------------------------
// 5. Hybrid dominance on planted data
// ----------------------------------------------------------------------------

void criterion_5() {
  SyntheticSpec spec;
  spec.n_users = 20;
  spec.conversations_per_user = 16;
  spec.embedding_dim = 8;
  spec.noise_sd = 0.25;
  spec.user_intercept_sd = 0.15;
  spec.seed = 606;
  spec.truth_weights["conversation_volatility"] = -0.9;
  spec.truth_weights["judge_quality"] = 0.9;
  const SyntheticResult r = generate_synthetic(spec);
  const FeatureTable table =
      features_to_table(extract_features_batch(r.conversations), r.conversations);
  const BuildPairsResult pairs = build_pairs(r.conversations);

  std::vector<JudgeScore> judge;
  std::map<std::string, double> judge_map;
  for (const auto& c : r.conversations) {
    const double q = r.truth.latent_features.at(c.conversation_id).at("judge_quality");
    const int score = static_cast<int>(std::clamp<long>(std::lround(3.0 + 1.8 * q), 1, 5));
    judge.push_back({c.conversation_id, score, TemplateId::standard_v1, ""});
    judge_map[c.conversation_id] = score;
  }

  LouoConfig lc;
  lc.forest.n_trees = 150;
  lc.seed = 11;
  const PreferenceEvalReport trace_only =
      evaluate_louo(table, pairs.pairs, {ScorerKind::trace_forest, {}}, lc);
  const PreferenceEvalReport llm_only =
      evaluate_louo(table, pairs.pairs, {ScorerKind::llm_score, judge_map}, lc);
  const PreferenceEvalReport hybrid = evaluate_louo(
      assemble_hybrid_table(table, judge), pairs.pairs, {ScorerKind::hybrid_forest, {}}, lc);

  const std::vector<PreferenceEvalReport> reports{llm_only, trace_only, hybrid};
  const ComparisonTable cmp = compare_report(reports);
  double p_vs_trace = 1.0, p_vs_llm = 1.0;
  for (const PairwiseComparison& c : cmp.comparisons) {
    if (c.scorer_b == "hybrid_forest" && c.scorer_a == "trace_forest") p_vs_trace = c.test.p;
    if (c.scorer_b == "hybrid_forest" && c.scorer_a == "llm_score") p_vs_llm = c.test.p;
  }

  const double margin_trace = hybrid.mean_accuracy - trace_only.mean_accuracy;
  const double margin_llm = hybrid.mean_accuracy - llm_only.mean_accuracy;
  const bool pass =
      margin_trace >= 0.03 && margin_llm >= 0.03 && p_vs_trace < 0.05 && p_vs_llm < 0.05;
  report(5, "hybrid dominance over both single-signal scorers", pass,
         fmt("trace %.2f%%, llm %.2f%%, hybrid %.2f%%, margins %.1f / %.1f pts, p %.1e / %.1e",
             100.0 * trace_only.mean_accuracy, 100.0 * llm_only.mean_accuracy,
             100.0 * hybrid.mean_accuracy, 100.0 * margin_trace, 100.0 * margin_llm,
             p_vs_trace, p_vs_llm));
}

// ----------------------------------------------------------------------------
// 6. LME recovery
// ----------------------------------------------------------------------------

void criterion_6() {
  int covered = 0;
  const int runs = 100;
#pragma omp parallel for reduction(+ : covered) schedule(dynamic)
  for (int s = 0; s < runs; ++s) {
    std::mt19937_64 rng(100000 + s);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> x, y;
    std::vector<std::string> user;
    for (int u = 0; u < 60; ++u) {
      const double intercept = 1.0 * gauss(rng);
      for (int i = 0; i < 12; ++i) {
        x.push_back(gauss(rng));
        y.push_back(1.0 + 2.0 * x.back() + intercept + 0.5 * gauss(rng));
        user.push_back("u" + std::to_string(u));
      }
    }
    const LmeFit fit = fit_lme_single(x, y, user);
    if (std::abs(fit.beta - 2.0) <= 3.0 * fit.se) ++covered;
  }

  // no-user-variance data lands on the boundary and matches least squares
  std::mt19937_64 rng(1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x, y;
  std::vector<std::string> user;
  for (int u = 0; u < 40; ++u) {
    for (int i = 0; i < 10; ++i) {
      x.push_back(gauss(rng));
      y.push_back(1.0 + 2.0 * x.back() + 0.5 * gauss(rng));
      user.push_back("u" + std::to_string(u));
    }
  }
  const LmeFit degenerate = fit_lme_single(x, y, user);
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double ols_delta = std::abs(degenerate.beta - sxy / sxx);

  const bool pass = covered >= 95 && ols_delta <= 1e-6;
  report(6, "LME recovers the planted coefficient and its OLS limit", pass,
         fmt("planted beta in 3 se: %d/100 (>= 95), |beta - ols| = %.1e (<= 1e-6)", covered,
             ols_delta));
}

// ----------------------------------------------------------------------------
// 7. Smooth calibration
// ----------------------------------------------------------------------------

void criterion_7() {
  int linear_quiet = 0, sine_flagged = 0;
  const int runs = 100;
#pragma omp parallel for reduction(+ : linear_quiet, sine_flagged) schedule(dynamic)
  for (int s = 0; s < runs; ++s) {
    std::mt19937_64 rng(7000 + s);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> x, ylin, ysin;
    std::vector<std::string> user;
    for (int u = 0; u < 20; ++u) {
      for (int i = 0; i < 15; ++i) {
        const double xv = unit(rng);
        x.push_back(xv);
        ylin.push_back(2.0 * xv + 0.1 * gauss(rng));
        ysin.push_back(std::sin(2.0 * M_PI * xv) + 0.1 * gauss(rng));
        user.push_back("u" + std::to_string(u));
      }
    }
    if (fit_smooth_single(x, ylin, user).p_nonlinear > 0.05) ++linear_quiet;
    if (fit_smooth_single(x, ysin, user).p_nonlinear < 0.01) ++sine_flagged;
  }
  const bool pass = linear_quiet >= 90 && sine_flagged >= 95;
  report(7, "smooth nonlinearity test calibration", pass,
         fmt("linear truth quiet %d/100 (>= 90), sine truth flagged %d/100 (>= 95)",
             linear_quiet, sine_flagged));
}

// ----------------------------------------------------------------------------
// 8. Interaction screening
// ----------------------------------------------------------------------------

void criterion_8() {
  // prune_pairs equals a brute-force correlation scan, honoring the strict
  // "> 0.7" boundary
  bool prune_ok = true;
  {
    std::mt19937_64 rng(4040);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    FeatureTable t;
    for (int j = 0; j < 10; ++j) t.columns.push_back("f" + std::to_string(j));
    for (int i = 0; i < 150; ++i) {
      TableRow row;
      row.conversation_id = "r" + std::to_string(i);
      const double base = unit(rng);
      for (int j = 0; j < 10; ++j) {
        if (unit(rng) < 0.1) {
          row.values.emplace_back(std::nullopt);
        } else if (j == 1) {
          row.values.emplace_back(0.95 * base + 0.05 * unit(rng));  // correlated with f2
        } else if (j == 2) {
          row.values.emplace_back(base);
        } else {
          row.values.emplace_back(unit(rng));
        }
      }
      t.rows.push_back(std::move(row));
    }
    const PruneResult fast = prune_pairs(t);
    std::vector<FeaturePairCorrelation> brute;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      for (std::size_t j = i + 1; j < t.columns.size(); ++j) {
        std::vector<double> xi, xj;
        for (const TableRow& row : t.rows) {
          if (row.values[i] && row.values[j]) {
            xi.push_back(*row.values[i]);
            xj.push_back(*row.values[j]);
          }
        }
        if (xi.size() < 3) continue;
        const double r = pearson(xi, xj);
        if (std::isnan(r) || std::abs(r) > 0.7) continue;
        brute.push_back({t.columns[i], t.columns[j], r});
      }
    }
    prune_ok = fast.retained.size() == brute.size();
    if (prune_ok) {
      for (std::size_t k = 0; k < brute.size(); ++k) {
        prune_ok &= fast.retained[k].feature_a == brute[k].feature_a &&
                    fast.retained[k].feature_b == brute[k].feature_b &&
                    fast.retained[k].r == brute[k].r;
      }
    }
    // the engineered near-duplicate pair must have been pruned
    for (const auto& p : fast.retained) {
      prune_ok &= !(p.feature_a == "f1" && p.feature_b == "f2");
    }
  }

  int top_ranked = 0;
  std::size_t candidate_count = 0;
  const int runs = 50;
#pragma omp parallel for reduction(+ : top_ranked) schedule(dynamic)
  for (int s = 0; s < runs; ++s) {
    std::mt19937_64 rng(8800 + s);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    FeatureTable t;
    for (int j = 0; j < 8; ++j) t.columns.push_back("f" + std::to_string(j));
    for (int i = 0; i < 400; ++i) {
      TableRow row;
      row.conversation_id = "r" + std::to_string(i);
      row.user_id = "u" + std::to_string(i % 20);
      std::vector<double> f;
      for (int j = 0; j < 8; ++j) f.push_back(unit(rng));
      for (double v : f) row.values.emplace_back(v);
      row.satisfaction = 4.0 * f[0] * f[1] + 0.2 * gauss(rng);
      t.rows.push_back(std::move(row));
    }
    const std::vector<FeaturePairCorrelation> pairs = prune_pairs(t).retained;
    const ScreenResult screened = screen_interactions(t, pairs);
    if (s == 0) candidate_count = screened.candidates.size();
    if (!screened.candidates.empty() && screened.candidates[0].feature_a == "f0" &&
        screened.candidates[0].feature_b == "f1") {
      ++top_ranked;
    }
  }

  const bool pass = prune_ok && candidate_count >= 20 && top_ranked >= 45;
  report(8, "interaction screening ranks the planted pair first", pass,
         fmt("prune matches brute force: %s; planted pair first %d/50 (>= 45) among %zu "
             "candidates",
             prune_ok ? "yes" : "no", top_ranked, candidate_count));
}

// ----------------------------------------------------------------------------
// 9. Full-pipeline reproducibility
// ----------------------------------------------------------------------------

#ifndef TRACE_CLI_PATH
#error "TRACE_CLI_PATH must point at the trace binary"
#endif

bool run_pipeline(const fs::path& dir, std::string* log) {
  fs::create_directories(dir);
  const std::string cli = TRACE_CLI_PATH;
  const std::string d = dir.string();
  const std::vector<std::string> commands = {
      cli + " synth --out " + d + "/corpus.jsonl --truth-out " + d +
          "/truth.json --n-users 25 --convs-per-user 20 --dim 8 --seed 4242"
          " --weight conversation_volatility=-1.0 --weight median_gap_time=-0.8"
          " --weight avg_model_turn_duration=0.7",
      cli + " extract --corpus " + d + "/corpus.jsonl --out " + d + "/features.csv",
      cli + " train --features " + d + "/features.csv --out " + d +
          "/model.json --trees 200 --seed 4242",
      cli + " score --model " + d + "/model.json --features " + d + "/features.csv --out " + d +
          "/scores.csv",
      cli + " eval-pairwise --features " + d + "/features.csv --scorers trace_forest" +
          " --out-json " + d + "/eval.json --out-csv " + d + "/eval.csv --trees 120 --seed 4242",
      cli + " stats --features " + d + "/features.csv --out " + d + "/effects.csv",
      cli + " screen --features " + d + "/features.csv --out " + d +
          "/screening.csv --surface-dir " + d + "/surfaces --top 2 --grid-size 12 --seed 4242",
  };
  for (const std::string& cmd : commands) {
    const std::string full = cmd + " >> " + d + "/pipeline.log 2>&1";
    if (std::system(full.c_str()) != 0) {
      *log = "command failed: " + cmd;
      return false;
    }
  }
  return true;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void criterion_9() {
  const auto start = std::chrono::steady_clock::now();
  const fs::path base = "acceptance_tmp";
  fs::remove_all(base);
  std::string log;
  const bool ok1 = run_pipeline(base / "run1", &log);
  const bool ok2 = ok1 && run_pipeline(base / "run2", &log);
  const double secs = elapsed_s(start);

  bool identical = ok1 && ok2;
  std::string mismatch;
  if (identical) {
    // every report file, including the emitted surfaces (pipeline.log carries
    // wall-clock-free output too, but only artifacts are the contract)
    std::vector<std::string> files = {"corpus.jsonl", "truth.json",   "features.csv",
                                      "model.json",   "scores.csv",   "eval.json",
                                      "eval.csv",     "effects.csv",  "screening.csv"};
    for (const auto& entry : fs::directory_iterator(base / "run1" / "surfaces")) {
      files.push_back("surfaces/" + entry.path().filename().string());
    }
    for (const std::string& f : files) {
      if (!fs::exists(base / "run2" / f) ||
          file_bytes(base / "run1" / f) != file_bytes(base / "run2" / f)) {
        identical = false;
        mismatch = f;
        break;
      }
    }
  }

  const bool pass = ok1 && ok2 && identical && secs < 300.0;
  report(9, "full pipeline twice is byte-identical and under budget", pass,
         pass ? fmt("all report files identical, %.1f s for both runs", secs)
              : (log.empty() ? "first mismatch: " + mismatch : log));
  if (pass) fs::remove_all(base);
}

// ----------------------------------------------------------------------------
// 10. Prompt fidelity
// ----------------------------------------------------------------------------

void criterion_10() {
  const bool t1 = prompt_template(TemplateId::standard_v1).body == trace_test::kGoldenStandard;
  const bool t2 = prompt_template(TemplateId::goal_aware_v2).body == trace_test::kGoldenGoalAware;

  // parser accepts exactly {ws, digit 1-5, ws}: exhaustive over a small
  // alphabet plus seeded fuzz
  bool parser_ok = true;
  {
    const std::string alphabet = " \t\n012569.-";
    std::vector<std::string> pool{""};
    for (int len = 1; len <= 3; ++len) {
      std::vector<std::string> next;
      for (const auto& s : pool) {
        if (s.size() == static_cast<std::size_t>(len) - 1) {
          for (char ch : alphabet) next.push_back(s + ch);
        }
      }
      for (const auto& s : next) {
        std::size_t i = 0, j = s.size();
        auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n'; };
        while (i < j && ws(s[i])) ++i;
        while (j > i && ws(s[j - 1])) --j;
        const bool expect = (j - i == 1) && s[i] >= '1' && s[i] <= '5';
        if (parse_judge_response(s).has_value() != expect) {
          parser_ok = false;
          std::printf("  parser mismatch on %s\n", s.c_str());
        }
      }
      pool.insert(pool.end(), next.begin(), next.end());
    }
    std::mt19937_64 rng(0xFACE);
    for (int i = 0; i < 5000 && parser_ok; ++i) {
      std::string s;
      const int len = static_cast<int>(rng() % 6);
      for (int k = 0; k < len; ++k) s += static_cast<char>(' ' + rng() % 95);
      std::size_t a = 0, b = s.size();
      auto ws = [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
      };
      while (a < b && ws(s[a])) ++a;
      while (b > a && ws(s[b - 1])) --b;
      const bool expect = (b - a == 1) && s[a] >= '1' && s[a] <= '5';
      if (parse_judge_response(s).has_value() != expect) parser_ok = false;
    }
  }

  const bool pass = t1 && t2 && parser_ok;
  report(10, "prompt templates byte-match, parser accepts exactly 1..5", pass,
         fmt("template1 %s, template2 %s, parser %s", t1 ? "ok" : "DIFFERS",
             t2 ? "ok" : "DIFFERS", parser_ok ? "exact" : "leaky"));
}

}  // namespace

int main() {
  std::printf("acceptance suite\n================\n");
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  std::printf("================\n%s (%d criterion failure%s)\n",
              g_failures == 0 ? "ALL CRITERIA PASS" : "FAILURES PRESENT", g_failures,
              g_failures == 1 ? "" : "s");
  return g_failures == 0 ? 0 : 1;
}
