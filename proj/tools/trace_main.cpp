// trace: conversational-geometry reward toolkit.
//
// Subcommands cover the full pipeline: synth -> extract -> train / llm-score
// -> eval-pairwise / stats / screen. Every command is a thin deterministic
// orchestration of one library module; identical inputs and seed produce
// byte-identical outputs.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "trace/corpus.hpp"
#include "trace/error.hpp"
#include "trace/forest.hpp"
#include "trace/geometry.hpp"
#include "trace/llm_bridge.hpp"
#include "trace/preference.hpp"
#include "trace/stats.hpp"
#include "trace/table.hpp"

namespace {

using nlohmann::ordered_json;
using namespace trace;

// ----------------------------------------------------------------------------
// Run configuration: JSON file defaults, flags override.
// ----------------------------------------------------------------------------

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;
  // extraction
  int late_k = 4;
  double eps = 1e-9;
  bool normalize = true;
  int rating_offset = 0;
  // forest
  ForestConfig forest;
  // eval
  int min_pairs_per_user = 1;
  bool cross_user = false;
  // stats
  int interior_knots = 10;
  int grid_size = 20;
  int marginal_basis = 8;
};

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const ordered_json::parse_error& e) {
    throw DataError("config file: " + std::string(e.what()));
  }
  RunConfig cfg;
  auto get = [](const ordered_json& obj, const char* key, auto fallback) {
    using T = decltype(fallback);
    if (obj.contains(key)) return obj[key].template get<T>();
    return fallback;
  };
  cfg.seed = get(j, "seed", cfg.seed);
  cfg.threads = get(j, "threads", cfg.threads);
  if (j.contains("extraction")) {
    const auto& e = j["extraction"];
    cfg.late_k = get(e, "late_k", cfg.late_k);
    cfg.eps = get(e, "eps", cfg.eps);
    cfg.normalize = get(e, "normalize", cfg.normalize);
    cfg.rating_offset = get(e, "rating_offset", cfg.rating_offset);
  }
  if (j.contains("forest")) {
    const auto& f = j["forest"];
    cfg.forest.n_trees = get(f, "n_trees", cfg.forest.n_trees);
    cfg.forest.min_samples_leaf = get(f, "min_samples_leaf", cfg.forest.min_samples_leaf);
    cfg.forest.max_depth = get(f, "max_depth", cfg.forest.max_depth);
    cfg.forest.features_per_split = get(f, "features_per_split", cfg.forest.features_per_split);
    cfg.forest.bootstrap = get(f, "bootstrap", cfg.forest.bootstrap);
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    cfg.min_pairs_per_user = get(e, "min_pairs_per_user", cfg.min_pairs_per_user);
    cfg.cross_user = get(e, "cross_user", cfg.cross_user);
  }
  if (j.contains("stats")) {
    const auto& s = j["stats"];
    cfg.interior_knots = get(s, "interior_knots", cfg.interior_knots);
    cfg.grid_size = get(s, "grid_size", cfg.grid_size);
    cfg.marginal_basis = get(s, "marginal_basis", cfg.marginal_basis);
  }
  return cfg;
}

// ----------------------------------------------------------------------------
// Shared helpers
// ----------------------------------------------------------------------------

std::vector<Conversation> load_corpus_or_fail(const std::string& path,
                                              const IngestOptions& options) {
  const LoadResult loaded = load_corpus(path, options);
  if (!loaded.errors.empty()) {
    for (const LoadError& e : loaded.errors) {
      std::cerr << "error: " << path << ":" << e.line << ": "
                << (e.kind == LoadError::Kind::parse ? "parse: " : "validation: ") << e.message;
      if (!e.conversation_id.empty()) std::cerr << " [" << e.conversation_id << "]";
      std::cerr << '\n';
    }
    throw DataError(std::to_string(loaded.errors.size()) + " record(s) failed to load from '" +
                    path + "'");
  }
  return loaded.conversations;
}

std::vector<double> targets_from_table(const FeatureTable& table) {
  std::vector<double> targets;
  targets.reserve(table.rows.size());
  for (const TableRow& row : table.rows) {
    if (!row.satisfaction) {
      throw DataError("row '" + row.conversation_id + "' has no satisfaction rating");
    }
    targets.push_back(*row.satisfaction);
  }
  return targets;
}

ordered_json report_to_json(const PreferenceEvalReport& report) {
  ordered_json j;
  j["scorer"] = report.scorer_name;
  j["mean_accuracy"] = report.mean_accuracy;
  j["sd_accuracy"] = report.sd_accuracy;
  j["total_pairs"] = report.total_pairs;
  ordered_json per_user = ordered_json::object();
  for (const auto& [user, acc] : report.per_user) {
    ordered_json u;
    u["n_pairs"] = acc.n_pairs;
    u["accuracy"] = acc.accuracy;
    per_user[user] = std::move(u);
  }
  j["per_user"] = std::move(per_user);
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw DataError("failed writing '" + path + "'");
}

// ----------------------------------------------------------------------------
// Subcommand bodies
// ----------------------------------------------------------------------------

struct SynthArgs {
  std::string out_path;
  std::string truth_path;
  SyntheticSpec spec;
  std::vector<std::string> weights;
};

int cmd_synth(SynthArgs& args) {
  for (const std::string& w : args.weights) {
    const std::size_t eq = w.find('=');
    if (eq == std::string::npos) {
      throw UsageError("--weight expects feature=value, got '" + w + "'");
    }
    try {
      args.spec.truth_weights[w.substr(0, eq)] = std::stod(w.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("--weight expects a numeric value in '" + w + "'");
    }
  }
  const SyntheticResult result = generate_synthetic(args.spec);
  save_corpus(args.out_path, result.conversations);
  if (!args.truth_path.empty()) save_truth_sidecar(args.truth_path, result.truth);
  std::cout << "wrote " << result.conversations.size() << " conversations to " << args.out_path
            << '\n';
  if (!args.truth_path.empty()) std::cout << "wrote truth sidecar to " << args.truth_path << '\n';
  return 0;
}

struct ExtractArgs {
  std::string corpus_path;
  std::string out_path;
  std::string sidecar_path;
  IngestOptions ingest;
  ExtractionParams params;
};

int cmd_extract(const ExtractArgs& args) {
  IngestOptions ingest = args.ingest;
  if (!args.sidecar_path.empty()) ingest.sidecar_path = args.sidecar_path;
  const std::vector<Conversation> corpus = load_corpus_or_fail(args.corpus_path, ingest);
  if (corpus.empty()) {
    FeatureTable empty;
    empty.columns = feature_ids();
    write_table_csv(args.out_path, empty);
    std::cerr << "warning: empty corpus, wrote header-only table\n";
    return 0;
  }
  const std::vector<FeatureVector> vectors = extract_features_batch(corpus, args.params);
  const FeatureTable table = features_to_table(vectors, corpus);
  write_table_csv(args.out_path, table);

  std::cout << "extracted " << table.rows.size() << " rows x " << table.columns.size()
            << " features -> " << args.out_path << "\nmissingness per feature:\n";
  for (std::size_t j = 0; j < table.columns.size(); ++j) {
    std::size_t missing = 0;
    for (const TableRow& row : table.rows) {
      if (!row.values[j]) ++missing;
    }
    std::cout << "  " << table.columns[j] << ": " << missing << "/" << table.rows.size() << '\n';
  }

  std::cout << "satisfaction by use case (count, mean, sd):\n";
  for (const CategoryRow& row : category_summary(corpus)) {
    std::printf("  %-40s %5zu  %.2f  %.2f\n", row.use_case.c_str(), row.count,
                row.mean_satisfaction, row.sd_satisfaction);
  }
  return 0;
}

struct TrainArgs {
  std::string features_path;
  std::string out_path;
  ForestConfig config;
};

int cmd_train(const TrainArgs& args) {
  const FeatureTable table = read_table_csv(args.features_path);
  const std::vector<double> targets = targets_from_table(table);
  OobStats oob;
  const ForestModel model = train_forest(table, targets, args.config, &oob);
  save_model(args.out_path, model);
  std::cout << "trained " << model.trees.size() << " trees on " << table.rows.size()
            << " rows -> " << args.out_path << '\n';
  if (args.config.bootstrap && oob.covered_rows > 0) {
    std::cout << "out-of-bag R2: " << oob.r2 << " (" << oob.covered_rows << " rows)\n";
  }
  return 0;
}

struct ScoreArgs {
  std::string model_path;
  std::string features_path;
  std::string out_path;
};

int cmd_score(const ScoreArgs& args) {
  const ForestModel model = load_model(args.model_path);
  const FeatureTable table = read_table_csv(args.features_path);
  const std::vector<double> scores = predict_table(model, table);
  std::ostringstream out;
  out << "conversation_id,score\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    out << table.rows[i].conversation_id << ',' << format_double(scores[i]) << '\n';
  }
  write_text_file(args.out_path, out.str());
  std::cout << "scored " << table.rows.size() << " conversations -> " << args.out_path << '\n';
  return 0;
}

struct LlmScoreArgs {
  std::string corpus_path;
  std::string out_path;
  std::string endpoint;
  std::string from_file;
  std::string template_name = "standard_v1";
  std::string credential_env;
  RetryPolicy policy;
  int parallelism = 1;
  IngestOptions ingest;
};

int cmd_llm_score(const LlmScoreArgs& args) {
  if (args.endpoint.empty() == args.from_file.empty()) {
    throw UsageError("exactly one of --endpoint or --from-file is required");
  }
  const auto template_id = template_id_from_name(args.template_name);
  if (!template_id) throw UsageError("unknown template '" + args.template_name + "'");
  const std::vector<Conversation> corpus = load_corpus_or_fail(args.corpus_path, args.ingest);

  if (!args.from_file.empty()) {
    const std::vector<JudgeScore> scores = acquire_scores_from_file(args.from_file, corpus);
    if (!args.out_path.empty()) write_score_file(args.out_path, scores);
    std::cout << "validated " << scores.size() << " scores from " << args.from_file << '\n';
    return 0;
  }

  EndpointSource source;
  source.url = args.endpoint;
  source.policy = args.policy;
  source.parallelism = args.parallelism;
  source.credential_env = args.credential_env;
  const ScoreAcquisition acquired =
      acquire_scores_from_endpoint(corpus, *template_id, source);
  write_score_file(args.out_path, acquired.scores);
  std::cout << "scored " << acquired.scores.size() << "/" << corpus.size()
            << " conversations -> " << args.out_path << '\n';
  if (!acquired.failures.empty()) {
    for (const ScoreFailure& f : acquired.failures) {
      std::cerr << "missing score for " << f.conversation_id << " after " << f.attempts
                << " attempt(s): " << f.reason << '\n';
    }
    throw DataError(std::to_string(acquired.failures.size()) + " conversation(s) unscored");
  }
  return 0;
}

struct EvalArgs {
  std::string features_path;
  std::string llm_scores_path;
  std::string out_json;
  std::string out_csv;
  std::vector<std::string> scorers{"trace_forest"};
  BuildPairsOptions pair_options;
  LouoConfig louo;
};

int cmd_eval(const EvalArgs& args) {
  for (const std::string& name : args.scorers) {
    if (name != "trace_forest" && name != "llm_score" && name != "hybrid_forest") {
      throw UsageError("unknown scorer '" + name + "' (trace_forest, llm_score, hybrid_forest)");
    }
  }
  const FeatureTable table = read_table_csv(args.features_path);
  const BuildPairsResult pairs = build_pairs(table, args.pair_options);
  if (pairs.pairs.empty()) throw DataError("no preference pairs with differing ratings");

  std::map<std::string, double> llm_scores;
  const bool needs_llm =
      std::any_of(args.scorers.begin(), args.scorers.end(),
                  [](const std::string& s) { return s == "llm_score" || s == "hybrid_forest"; });
  if (needs_llm) {
    if (args.llm_scores_path.empty()) {
      throw UsageError("--llm-scores is required for llm_score / hybrid_forest (produce it "
                       "with the llm-score command)");
    }
    llm_scores = scores_as_map(read_score_file(args.llm_scores_path));
  }

  std::vector<PreferenceEvalReport> reports;
  for (const std::string& name : args.scorers) {
    if (name == "trace_forest") {
      reports.push_back(
          evaluate_louo(table, pairs.pairs, {ScorerKind::trace_forest, {}}, args.louo));
    } else if (name == "llm_score") {
      reports.push_back(
          evaluate_louo(table, pairs.pairs, {ScorerKind::llm_score, llm_scores}, args.louo));
    } else if (name == "hybrid_forest") {
      std::vector<JudgeScore> judge;
      for (const auto& [id, v] : llm_scores) {
        judge.push_back({id, static_cast<int>(v), TemplateId::standard_v1, ""});
      }
      const FeatureTable hybrid = assemble_hybrid_table(table, judge);
      reports.push_back(
          evaluate_louo(hybrid, pairs.pairs, {ScorerKind::hybrid_forest, {}}, args.louo));
    }
  }

  std::cout << "eligible users: " << pairs.eligible_users.size()
            << ", preference pairs: " << pairs.pairs.size() << "\n\n"
            << "scorer               mean%    sd%     pairs\n";
  for (const PreferenceEvalReport& r : reports) {
    std::printf("%-20s %6.2f  %6.2f  %8zu\n", r.scorer_name.c_str(), 100.0 * r.mean_accuracy,
                100.0 * r.sd_accuracy, r.total_pairs);
  }

  ordered_json out;
  out["eligible_users"] = pairs.eligible_users;
  out["total_pairs"] = pairs.pairs.size();
  ordered_json scorers_json = ordered_json::object();
  for (const PreferenceEvalReport& r : reports) scorers_json[r.scorer_name] = report_to_json(r);
  out["scorers"] = std::move(scorers_json);

  if (reports.size() >= 2) {
    const ComparisonTable cmp = compare_report(reports);
    std::cout << "\npaired t-tests (per-user accuracies):\n";
    ordered_json tests = ordered_json::array();
    for (const PairwiseComparison& c : cmp.comparisons) {
      std::printf("  %s vs %s: t=%.4f df=%.0f p=%.6g, disagreement %.1f%%\n",
                  c.scorer_a.c_str(), c.scorer_b.c_str(), c.test.t, c.test.df, c.test.p,
                  100.0 * c.disagreement);
      ordered_json t;
      t["scorer_a"] = c.scorer_a;
      t["scorer_b"] = c.scorer_b;
      t["t"] = c.test.t;
      t["df"] = c.test.df;
      t["p"] = c.test.p;
      t["disagreement"] = c.disagreement;
      tests.push_back(std::move(t));
    }
    out["paired_tests"] = std::move(tests);
    if (!args.out_csv.empty()) write_text_file(args.out_csv, comparison_to_csv(cmp));
  } else if (!args.out_csv.empty()) {
    ComparisonTable single;
    for (const PreferenceEvalReport& r : reports) {
      single.rows.push_back(
          {r.scorer_name, 100.0 * r.mean_accuracy, 100.0 * r.sd_accuracy, r.total_pairs});
    }
    write_text_file(args.out_csv, comparison_to_csv(single));
  }

  std::cout << "\nreference results (original study, 76 users / 5,423 pairs):\n";
  for (const ReferenceRow& row : reference_accuracy_rows()) {
    std::printf("  %-12s %6.2f (sd %5.2f)\n", row.scorer, row.mean_pct, row.sd_pct);
  }
  std::printf("  trace/llm disagreement: %.1f%%\n", 100.0 * reference_disagreement_rate());

  if (!args.out_json.empty()) write_text_file(args.out_json, out.dump(2) + "\n");
  return 0;
}

struct StatsArgs {
  std::string features_path;
  std::string out_path;
  SmoothOptions options;
};

int cmd_stats(const StatsArgs& args) {
  const FeatureTable table = read_table_csv(args.features_path);
  const std::vector<FeatureEffect> effects = analyze_features(table, args.options);
  write_text_file(args.out_path, effects_to_csv(effects));
  std::size_t fitted = 0;
  for (const FeatureEffect& e : effects) {
    if (e.lme) ++fitted;
    if (!e.note.empty()) std::cerr << "note: " << e.feature << ": " << e.note << '\n';
  }
  std::cout << "fitted " << fitted << "/" << effects.size() << " features -> " << args.out_path
            << '\n';
  return 0;
}

struct ScreenArgs {
  std::string features_path;
  std::string out_path;
  std::string surface_dir;
  int top = 4;
  ScreenOptions options;
};

int cmd_screen(const ScreenArgs& args) {
  const FeatureTable table = read_table_csv(args.features_path);
  const PruneResult pruned = prune_pairs(table);
  for (const std::string& w : pruned.warnings) std::cerr << "warning: " << w << '\n';

  const ScreenResult screened = screen_interactions(table, pruned.retained, args.options);
  for (const std::string& w : screened.warnings) std::cerr << "warning: " << w << '\n';

  std::ostringstream csv;
  csv << "feature_a,feature_b,pearson_r,effect_size,rank\n";
  for (std::size_t i = 0; i < screened.candidates.size(); ++i) {
    const InteractionCandidate& c = screened.candidates[i];
    csv << c.feature_a << ',' << c.feature_b << ',' << format_double(c.pearson_r) << ','
        << format_double(c.effect_size) << ',' << (i + 1) << '\n';
  }
  write_text_file(args.out_path, csv.str());
  std::cout << "screened " << pruned.retained.size() << " pairs, kept "
            << screened.candidates.size() << " -> " << args.out_path << '\n';

  if (!args.surface_dir.empty()) {
    std::filesystem::create_directories(args.surface_dir);
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(args.top),
                                                screened.candidates.size());
    for (std::size_t i = 0; i < n; ++i) {
      const InteractionCandidate& c = screened.candidates[i];
      const std::string path = args.surface_dir + "/surface_" + std::to_string(i + 1) + "_" +
                               c.feature_a + "__" + c.feature_b + ".txt";
      emit_surface(c, path);
      std::cout << "surface " << (i + 1) << ": " << c.feature_a << " x " << c.feature_b
                << " (effect " << format_double(c.effect_size) << ") -> " << path << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // --config provides defaults; explicit flags override them.
  RunConfig cfg;
  try {
    for (int i = 1; i + 1 < argc; ++i) {
      if (std::string(argv[i]) == "--config") cfg = load_run_config(argv[i + 1]);
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"trace: turn conversation transcripts into geometric interaction "
               "signals, learn a satisfaction reward over them, and analyze what "
               "drives preference"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration (flag defaults)");
  app.add_option("--seed", cfg.seed, "global seed fanned out to all stochastic components");
  app.add_option("--threads", cfg.threads, "worker thread bound (0 = library default)");
  app.add_option("--rating-offset", cfg.rating_offset,
                 "added to file ratings on ingestion (1 for 0-4 coded files)");
  app.add_option("--late-k", cfg.late_k, "late-volatility window (utterances)");

  // synth ---------------------------------------------------------------
  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus with "
                                                    "planted ground truth");
  synth_cmd->add_option("--out", synth.out_path, "corpus output (JSONL)")->required();
  synth_cmd->add_option("--truth-out", synth.truth_path, "truth sidecar output (JSON)");
  synth_cmd->add_option("--n-users", synth.spec.n_users, "number of users");
  synth_cmd->add_option("--convs-per-user", synth.spec.conversations_per_user,
                        "conversations per user");
  synth_cmd->add_option("--dim", synth.spec.embedding_dim, "embedding dimension");
  synth_cmd->add_option("--volatility-min", synth.spec.volatility_range[0], "walk step floor");
  synth_cmd->add_option("--volatility-max", synth.spec.volatility_range[1], "walk step ceiling");
  synth_cmd->add_option("--drift-min", synth.spec.drift_range[0], "goal drift floor");
  synth_cmd->add_option("--drift-max", synth.spec.drift_range[1], "goal drift ceiling");
  synth_cmd->add_option("--repetition-prob", synth.spec.repetition_prob,
                        "model-turn repetition probability");
  synth_cmd->add_option("--noise-sd", synth.spec.noise_sd, "rating noise");
  synth_cmd->add_option("--user-intercept-sd", synth.spec.user_intercept_sd,
                        "user intercept spread");
  synth_cmd->add_option("--weight", synth.weights,
                        "planted rating weight, feature=value (repeatable)");

  // extract -------------------------------------------------------------
  ExtractArgs extract;
  CLI::App* extract_cmd =
      app.add_subcommand("extract", "compute the feature table from a corpus");
  extract_cmd->add_option("--corpus", extract.corpus_path, "corpus JSONL")->required();
  extract_cmd->add_option("--out", extract.out_path, "feature CSV output")->required();
  extract_cmd->add_option("--sidecar", extract.sidecar_path, "embedding sidecar JSONL");
  extract_cmd->add_flag("--no-normalize", "keep embeddings as ingested");
  extract_cmd->add_option("--eps", cfg.eps, "goal convergence ratio division guard");

  // train ---------------------------------------------------------------
  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train the satisfaction forest");
  train_cmd->add_option("--features", train.features_path, "feature CSV")->required();
  train_cmd->add_option("--out", train.out_path, "model JSON output")->required();
  train_cmd->add_option("--trees", cfg.forest.n_trees, "number of trees");
  train_cmd->add_option("--min-leaf", cfg.forest.min_samples_leaf, "min samples per leaf");
  train_cmd->add_option("--max-depth", cfg.forest.max_depth, "depth cap (-1 unlimited)");
  train_cmd->add_option("--mtry", cfg.forest.features_per_split,
                        "features per split (0 = d/3)");
  train_cmd->add_flag("--no-bootstrap", "train every tree on the full sample");

  // score ---------------------------------------------------------------
  ScoreArgs score;
  CLI::App* score_cmd =
      app.add_subcommand("score", "export reward scores for a feature table");
  score_cmd->add_option("--model", score.model_path, "model JSON")->required();
  score_cmd->add_option("--features", score.features_path, "feature CSV")->required();
  score_cmd->add_option("--out", score.out_path, "score CSV output")->required();

  // llm-score -----------------------------------------------------------
  LlmScoreArgs llm;
  CLI::App* llm_cmd = app.add_subcommand(
      "llm-score", "acquire judge scores from an endpoint or validate a score file");
  llm_cmd->add_option("--corpus", llm.corpus_path, "corpus JSONL")->required();
  llm_cmd->add_option("--out", llm.out_path, "score file output (JSONL)");
  llm_cmd->add_option("--endpoint", llm.endpoint, "judge endpoint URL");
  llm_cmd->add_option("--from-file", llm.from_file, "existing score file to validate");
  llm_cmd->add_option("--template", llm.template_name, "standard_v1 | goal_aware_v2");
  llm_cmd->add_option("--retries", llm.policy.max_retries, "retry attempts per conversation");
  llm_cmd->add_option("--backoff-ms", llm.policy.initial_backoff_ms, "initial retry backoff");
  llm_cmd->add_option("--parallel", llm.parallelism, "bounded concurrent requests");
  llm_cmd->add_option("--credential-env", llm.credential_env,
                      "environment variable holding the endpoint credential");

  // eval-pairwise ---------------------------------------------------------
  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand(
      "eval-pairwise", "leave-one-user-out pairwise preference evaluation");
  eval_cmd->add_option("--features", eval.features_path, "feature CSV")->required();
  eval_cmd->add_option("--scorers", eval.scorers,
                       "scorers to run: trace_forest, llm_score, hybrid_forest")
      ->delimiter(',');
  eval_cmd->add_option("--llm-scores", eval.llm_scores_path, "judge score file");
  eval_cmd->add_option("--out-json", eval.out_json, "full report JSON output");
  eval_cmd->add_option("--out-csv", eval.out_csv, "accuracy table CSV output");
  eval_cmd->add_option("--min-pairs", cfg.min_pairs_per_user,
                       "pairs needed for a user to be eligible");
  eval_cmd->add_flag("--cross-user", "also build cross-user pairs (study flag)");
  eval_cmd->add_option("--trees", cfg.forest.n_trees, "forest size per fold");
  eval_cmd->add_option("--min-leaf", cfg.forest.min_samples_leaf, "min samples per leaf");

  // stats -----------------------------------------------------------------
  StatsArgs stats;
  CLI::App* stats_cmd = app.add_subcommand(
      "stats", "per-feature mixed-effects and nonlinearity analysis");
  stats_cmd->add_option("--features", stats.features_path, "feature CSV")->required();
  stats_cmd->add_option("--out", stats.out_path, "effects CSV output")->required();
  stats_cmd->add_option("--knots", cfg.interior_knots, "interior spline knots");

  // screen ----------------------------------------------------------------
  ScreenArgs screen;
  CLI::App* screen_cmd = app.add_subcommand(
      "screen", "rank feature-pair interactions by joint effect size");
  screen_cmd->add_option("--features", screen.features_path, "feature CSV")->required();
  screen_cmd->add_option("--out", screen.out_path, "ranking CSV output")->required();
  screen_cmd->add_option("--surface-dir", screen.surface_dir, "directory for surface grids");
  screen_cmd->add_option("--top", screen.top, "surfaces to emit");
  screen_cmd->add_option("--grid-size", cfg.grid_size, "lattice resolution per axis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
#ifdef _OPENMP
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif
    if (*synth_cmd) {
      synth.spec.seed = cfg.seed;
      return cmd_synth(synth);
    }
    if (*extract_cmd) {
      extract.ingest.normalize = extract_cmd->count("--no-normalize") == 0;
      extract.ingest.rating_offset = cfg.rating_offset;
      extract.params.late_k = cfg.late_k;
      extract.params.eps = cfg.eps;
      return cmd_extract(extract);
    }
    if (*train_cmd) {
      train.config = cfg.forest;
      train.config.bootstrap = train_cmd->count("--no-bootstrap") == 0;
      train.config.seed = cfg.seed;
      return cmd_train(train);
    }
    if (*score_cmd) return cmd_score(score);
    if (*llm_cmd) {
      llm.ingest.rating_offset = cfg.rating_offset;
      if (llm.endpoint.empty() == llm.from_file.empty()) {
        throw UsageError("exactly one of --endpoint or --from-file is required");
      }
      if (!llm.endpoint.empty() && llm.out_path.empty()) {
        throw UsageError("--out is required in endpoint mode (the score cache)");
      }
      return cmd_llm_score(llm);
    }
    if (*eval_cmd) {
      eval.pair_options.min_pairs_per_user = cfg.min_pairs_per_user;
      eval.pair_options.cross_user = eval_cmd->count("--cross-user") > 0 || cfg.cross_user;
      eval.louo.forest = cfg.forest;
      eval.louo.seed = cfg.seed;
      return cmd_eval(eval);
    }
    if (*stats_cmd) {
      stats.options.interior_knots = cfg.interior_knots;
      return cmd_stats(stats);
    }
    if (*screen_cmd) {
      screen.options.grid_size = cfg.grid_size;
      screen.options.marginal_basis = cfg.marginal_basis;
      return cmd_screen(screen);
    }
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
