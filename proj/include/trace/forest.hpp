#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trace/geometry.hpp"
#include "trace/table.hpp"

namespace trace {

// ============================================================================
// Random-forest regressor
// ============================================================================

struct ForestConfig {
  int n_trees = 200;
  int min_samples_leaf = 5;
  int max_depth = -1;          // -1 = unlimited
  int features_per_split = 0;  // 0 = floor(d/3), at least 1
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

// Flat binary tree. A node is internal when feature >= 0; left/right index
// into the same vector. Leaves carry the mean training target.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double leaf = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;
};

struct ForestModel {
  ForestConfig config;
  std::string catalog_hash;
  std::vector<std::string> columns;    // column order the trees index into
  std::vector<double> impute_medians;  // per column, fitted on training rows only
  std::vector<Tree> trees;
};

// Out-of-bag diagnostics (bootstrap mode only).
struct OobStats {
  double r2 = 0.0;
  std::size_t covered_rows = 0;                    // rows out of bag for >= 1 tree
  std::vector<std::optional<double>> predictions;  // per training row
};

// Grows config.n_trees CART regression trees on bootstrap samples with
// variance-reduction splits over a per-node random feature subset. Missing
// cells are filled with per-column training medians. Fully deterministic
// given the config seed, independent of thread count.
ForestModel train_forest(const FeatureTable& table, std::span<const double> targets,
                         const ForestConfig& config, OobStats* oob = nullptr);

// Mean of the tree leaf values; missing features imputed with the stored
// medians. The vector's catalog must match the model's.
double predict(const ForestModel& model, const FeatureVector& features);

// Fast path: batch prediction over table rows (columns must match the model).
std::vector<double> predict_table(const ForestModel& model, const FeatureTable& table);

// ============================================================================
// Partial dependence
// ============================================================================

struct PartialDependence {
  std::vector<std::string> features;      // 1 or 2 ids
  std::vector<std::vector<double>> axes;  // per-feature grid values
  std::vector<double> surface;            // row-major over axes
  double range() const;                   // max - min
};

PartialDependence partial_dependence(const ForestModel& model,
                                     std::span<const std::string> features,
                                     std::span<const std::vector<double>> grids,
                                     const FeatureTable& background);

// ============================================================================
// Serialization (versioned JSON; load(save(m)) predicts bit-identically)
// ============================================================================

void save_model(const std::string& path, const ForestModel& model);
std::string model_to_json(const ForestModel& model);
ForestModel load_model(const std::string& path);
ForestModel model_from_json(const std::string& text);

}  // namespace trace
