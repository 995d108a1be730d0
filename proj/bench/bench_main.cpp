// Benchmark comparing the OpenMP-parallel kernels against their serial
// counterparts (and the naive serial reference implementation kept for
// testing). Each kernel's parallel output is checked against the serial one
// before timings are reported.
//
//   ./trace_bench [conversations] [dim]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "reference_features.hpp"
#include "trace/corpus.hpp"
#include "trace/forest.hpp"
#include "trace/geometry.hpp"
#include "trace/preference.hpp"
#include "trace/table.hpp"

using namespace trace;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void print_row(const char* kernel, double serial_s, double parallel_s, const char* check) {
  std::printf("%-28s %10.3f s %10.3f s %8.2fx   %s\n", kernel, serial_s, parallel_s,
              serial_s / parallel_s, check);
}

}  // namespace

int main(int argc, char** argv) {
  const int n_conversations = argc > 1 ? std::atoi(argv[1]) : 2000;
  const int dim = argc > 2 ? std::atoi(argv[2]) : 32;
  const int threads = max_threads();

  SyntheticSpec spec;
  spec.n_users = std::max(4, n_conversations / 20);
  spec.conversations_per_user = (n_conversations + spec.n_users - 1) / spec.n_users;
  spec.embedding_dim = dim;
  spec.seed = 99;
  spec.truth_weights["conversation_volatility"] = -1.0;
  spec.truth_weights["median_gap_time"] = -0.8;
  const SyntheticResult data = generate_synthetic(spec);
  std::printf("corpus: %zu conversations, dim %d, %d thread(s)\n\n", data.conversations.size(),
              dim, threads);
  std::printf("%-28s %12s %12s %9s   %s\n", "kernel", "serial", "parallel", "speedup", "check");

  // ---- feature extraction: naive serial reference vs OpenMP batch ----
  {
    double t0 = now_s();
    std::vector<std::map<std::string, double>> reference(data.conversations.size());
    for (std::size_t i = 0; i < data.conversations.size(); ++i) {
      reference[i] = trace_reference::reference_features(data.conversations[i]);
    }
    const double serial_s = now_s() - t0;

    set_threads(threads);
    t0 = now_s();
    const std::vector<FeatureVector> batch = extract_features_batch(data.conversations);
    const double parallel_s = now_s() - t0;

    double worst = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (const auto& [id, expected] : reference[i]) {
        worst = std::max(worst, std::abs(batch[i].values.at(id) - expected));
      }
    }
    print_row("extract (vs reference)", serial_s, parallel_s,
              worst <= 1e-9 ? "outputs match" : "MISMATCH");
  }

  // ---- forest training: one thread vs all threads, same seed ----
  const FeatureTable table =
      features_to_table(extract_features_batch(data.conversations), data.conversations);
  std::vector<double> targets;
  for (const auto& c : data.conversations) targets.push_back(c.satisfaction);
  ForestConfig config;
  config.n_trees = 200;
  config.seed = 7;
  ForestModel serial_model, parallel_model;
  {
    set_threads(1);
    double t0 = now_s();
    serial_model = train_forest(table, targets, config);
    const double serial_s = now_s() - t0;

    set_threads(threads);
    t0 = now_s();
    parallel_model = train_forest(table, targets, config);
    const double parallel_s = now_s() - t0;

    const bool same = model_to_json(serial_model) == model_to_json(parallel_model);
    print_row("forest train (200 trees)", serial_s, parallel_s,
              same ? "models identical" : "MISMATCH");
  }

  // ---- batch prediction ----
  {
    set_threads(1);
    double t0 = now_s();
    const std::vector<double> serial_pred = predict_table(serial_model, table);
    const double serial_s = now_s() - t0;

    set_threads(threads);
    t0 = now_s();
    const std::vector<double> parallel_pred = predict_table(parallel_model, table);
    const double parallel_s = now_s() - t0;

    print_row("forest predict (batch)", serial_s, parallel_s,
              serial_pred == parallel_pred ? "predictions identical" : "MISMATCH");
  }

  // ---- leave-one-user-out evaluation ----
  {
    const BuildPairsResult pairs = build_pairs(data.conversations);
    LouoConfig lc;
    lc.forest.n_trees = 50;
    lc.seed = 3;

    set_threads(1);
    double t0 = now_s();
    const PreferenceEvalReport serial_rep =
        evaluate_louo(table, pairs.pairs, {ScorerKind::trace_forest, {}}, lc);
    const double serial_s = now_s() - t0;

    set_threads(threads);
    t0 = now_s();
    const PreferenceEvalReport parallel_rep =
        evaluate_louo(table, pairs.pairs, {ScorerKind::trace_forest, {}}, lc);
    const double parallel_s = now_s() - t0;

    const bool same = serial_rep.conversation_scores == parallel_rep.conversation_scores;
    print_row("louo eval (50-tree folds)", serial_s, parallel_s,
              same ? "reports identical" : "MISMATCH");
  }

  return 0;
}
