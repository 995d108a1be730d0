#include "trace/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "trace/error.hpp"
#include "trace/rng.hpp"

namespace trace {

using ordered_json = nlohmann::ordered_json;

namespace {

// ----------------------------------------------------------------------------
// Training matrix: rows imputed with per-column medians.
// ----------------------------------------------------------------------------

std::vector<double> column_medians(const FeatureTable& table) {
  const std::size_t d = table.columns.size();
  std::vector<double> medians(d, 0.0);
  std::vector<double> values;
  for (std::size_t j = 0; j < d; ++j) {
    values.clear();
    for (const TableRow& row : table.rows) {
      if (row.values[j]) values.push_back(*row.values[j]);
    }
    if (values.empty()) continue;  // all-missing column imputes as 0
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    medians[j] = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  }
  return medians;
}

std::vector<double> imputed_matrix(const FeatureTable& table,
                                   std::span<const double> medians) {
  const std::size_t d = table.columns.size();
  std::vector<double> x(table.rows.size() * d);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const auto& cell = table.rows[i].values[j];
      x[i * d + j] = cell ? *cell : medians[j];
    }
  }
  return x;
}

// ----------------------------------------------------------------------------
// CART growth
// ----------------------------------------------------------------------------

struct SplitCandidate {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

struct TreeBuilder {
  const std::vector<double>& x;  // row-major n x d
  std::span<const double> y;
  std::size_t d;
  int min_leaf;
  int max_depth;
  int mtry;
  std::mt19937_64& rng;
  Tree tree;
  std::vector<std::size_t> scratch_features;
  std::vector<std::pair<double, double>> scratch_sorted;  // (value, target)

  // Feature subset for one node: all features (in index order) when mtry == d,
  // otherwise a random draw without replacement, sorted ascending so gain ties
  // resolve to the lowest feature index.
  void sample_features() {
    scratch_features.clear();
    if (static_cast<std::size_t>(mtry) >= d) {
      for (std::size_t j = 0; j < d; ++j) scratch_features.push_back(j);
      return;
    }
    std::vector<std::size_t> pool(d);
    for (std::size_t j = 0; j < d; ++j) pool[j] = j;
    for (int k = 0; k < mtry; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, d - 1);
      std::swap(pool[static_cast<std::size_t>(k)], pool[pick(rng)]);
      scratch_features.push_back(pool[static_cast<std::size_t>(k)]);
    }
    std::sort(scratch_features.begin(), scratch_features.end());
  }

  SplitCandidate best_split(std::span<const std::size_t> rows, double parent_sse) {
    SplitCandidate best;
    sample_features();
    const std::size_t n = rows.size();
    for (std::size_t f : scratch_features) {
      scratch_sorted.clear();
      for (std::size_t r : rows) scratch_sorted.emplace_back(x[r * d + f], y[r]);
      std::sort(scratch_sorted.begin(), scratch_sorted.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double left_sum = 0.0, left_sq = 0.0;
      double total_sum = 0.0, total_sq = 0.0;
      for (const auto& [_, t] : scratch_sorted) {
        total_sum += t;
        total_sq += t * t;
      }
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double t = scratch_sorted[i].second;
        left_sum += t;
        left_sq += t * t;
        if (scratch_sorted[i].first == scratch_sorted[i + 1].first) continue;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < static_cast<std::size_t>(min_leaf) || nr < static_cast<std::size_t>(min_leaf))
          continue;
        const double right_sum = total_sum - left_sum;
        const double right_sq = total_sq - left_sq;
        const double sse_l = left_sq - left_sum * left_sum / static_cast<double>(nl);
        const double sse_r = right_sq - right_sum * right_sum / static_cast<double>(nr);
        const double gain = parent_sse - (sse_l + sse_r);
        if (gain > best.gain || (!best.found && gain > 0.0)) {
          double thr = 0.5 * (scratch_sorted[i].first + scratch_sorted[i + 1].first);
          if (thr >= scratch_sorted[i + 1].first) thr = scratch_sorted[i].first;
          best = {true, static_cast<int>(f), thr, gain};
        }
      }
    }
    return best;
  }

  std::int32_t grow(std::vector<std::size_t>& rows, int depth) {
    const std::size_t n = rows.size();
    double sum = 0.0, sq = 0.0;
    for (std::size_t r : rows) {
      sum += y[r];
      sq += y[r] * y[r];
    }
    const double mean = sum / static_cast<double>(n);
    const double sse = sq - sum * sum / static_cast<double>(n);

    const bool leafy = n < 2 * static_cast<std::size_t>(min_leaf) || sse <= 0.0 ||
                       (max_depth >= 0 && depth >= max_depth);
    SplitCandidate split;
    if (!leafy) split = best_split(rows, sse);
    if (leafy || !split.found) {
      TreeNode node;
      node.leaf = mean;
      tree.nodes.push_back(node);
      return static_cast<std::int32_t>(tree.nodes.size() - 1);
    }

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
      (x[r * d + static_cast<std::size_t>(split.feature)] <= split.threshold ? left_rows
                                                                             : right_rows)
          .push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    const std::int32_t self = static_cast<std::int32_t>(tree.nodes.size());
    TreeNode node;
    node.feature = split.feature;
    node.threshold = split.threshold;
    tree.nodes.push_back(node);
    const std::int32_t left = grow(left_rows, depth + 1);
    const std::int32_t right = grow(right_rows, depth + 1);
    tree.nodes[static_cast<std::size_t>(self)].left = left;
    tree.nodes[static_cast<std::size_t>(self)].right = right;
    return self;
  }
};

double predict_tree(const Tree& tree, const double* row) {
  const TreeNode* node = &tree.nodes[0];
  while (node->feature >= 0) {
    const double v = row[node->feature];
    node = &tree.nodes[static_cast<std::size_t>(v <= node->threshold ? node->left
                                                                     : node->right)];
  }
  return node->leaf;
}

}  // namespace

// ============================================================================
// Training
// ============================================================================

ForestModel train_forest(const FeatureTable& table, std::span<const double> targets,
                         const ForestConfig& config, OobStats* oob) {
  const std::size_t n = table.rows.size();
  const std::size_t d = table.columns.size();
  if (n == 0) throw DataError("cannot train on an empty table");
  if (n < 2) throw DataError("training needs at least 2 rows");
  if (targets.size() != n) {
    throw DataError("targets (" + std::to_string(targets.size()) + ") misaligned with rows (" +
                    std::to_string(n) + ")");
  }
  if (config.n_trees < 1) throw DataError("n_trees must be at least 1");
  if (config.min_samples_leaf < 1) throw DataError("min_samples_leaf must be at least 1");
  if (config.features_per_split < 0 ||
      config.features_per_split > static_cast<int>(d)) {
    throw DataError("features_per_split out of [0, d]");
  }
  for (double t : targets) {
    if (!std::isfinite(t)) throw DataError("non-finite training target");
  }
  for (const TableRow& row : table.rows) {
    for (const auto& cell : row.values) {
      if (cell && !std::isfinite(*cell)) {
        throw DataError("non-finite feature value on row '" + row.conversation_id + "'");
      }
    }
  }

  ForestModel model;
  model.config = config;
  model.catalog_hash = table.hash();
  model.columns = table.columns;
  model.impute_medians = column_medians(table);
  model.trees.resize(static_cast<std::size_t>(config.n_trees));

  const std::vector<double> x = imputed_matrix(table, model.impute_medians);
  const int mtry = config.features_per_split > 0
                       ? config.features_per_split
                       : std::max(1, static_cast<int>(d) / 3);

  std::vector<std::vector<std::uint8_t>> in_bag;
  if (oob && config.bootstrap) {
    in_bag.assign(static_cast<std::size_t>(config.n_trees),
                  std::vector<std::uint8_t>(n, 0));
  }

#pragma omp parallel for schedule(dynamic)
  for (std::int64_t t = 0; t < config.n_trees; ++t) {
    auto rng = make_rng(config.seed, {0x74726565ULL, static_cast<std::uint64_t>(t)});
    std::vector<std::size_t> rows;
    rows.reserve(n);
    if (config.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t i = 0; i < n; ++i) rows.push_back(pick(rng));
      if (!in_bag.empty()) {
        for (std::size_t r : rows) in_bag[static_cast<std::size_t>(t)][r] = 1;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) rows.push_back(i);
    }
    TreeBuilder builder{x, targets, d, config.min_samples_leaf, config.max_depth,
                        mtry, rng, {}, {}, {}};
    builder.grow(rows, 0);
    model.trees[static_cast<std::size_t>(t)] = std::move(builder.tree);
  }

  if (oob) {
    oob->predictions.assign(n, std::nullopt);
    oob->covered_rows = 0;
    oob->r2 = std::nan("");
    if (config.bootstrap) {
      double target_mean = 0.0;
      for (double t : targets) target_mean += t;
      target_mean /= static_cast<double>(n);
      double ss_res = 0.0, ss_tot = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t t = 0; t < model.trees.size(); ++t) {
          if (in_bag[t][i]) continue;
          sum += predict_tree(model.trees[t], &x[i * d]);
          ++count;
        }
        if (count == 0) continue;
        const double pred = sum / static_cast<double>(count);
        oob->predictions[i] = pred;
        ++oob->covered_rows;
        ss_res += (targets[i] - pred) * (targets[i] - pred);
        ss_tot += (targets[i] - target_mean) * (targets[i] - target_mean);
      }
      if (oob->covered_rows > 0 && ss_tot > 0.0) oob->r2 = 1.0 - ss_res / ss_tot;
    }
  }
  return model;
}

// ============================================================================
// Prediction
// ============================================================================

namespace {

double predict_row(const ForestModel& model, const double* row) {
  double sum = 0.0;
  for (const Tree& tree : model.trees) sum += predict_tree(tree, row);
  return sum / static_cast<double>(model.trees.size());
}

}  // namespace

double predict(const ForestModel& model, const FeatureVector& features) {
  // The vector must cover exactly this model's catalog (values + missing),
  // so vectors from a different catalog are never scored silently.
  if (features.values.size() + features.missing.size() != model.columns.size()) {
    throw DataError("catalog mismatch: vector covers " +
                    std::to_string(features.values.size() + features.missing.size()) +
                    " features, model expects " + std::to_string(model.columns.size()));
  }
  std::vector<double> row(model.columns.size());
  for (std::size_t j = 0; j < model.columns.size(); ++j) {
    const std::string& id = model.columns[j];
    const auto it = features.values.find(id);
    if (it != features.values.end()) {
      if (features.missing.count(id)) {
        throw DataError("feature '" + id + "' is both present and missing");
      }
      if (!std::isfinite(it->second)) throw NumericError("non-finite feature '" + id + "'");
      row[j] = it->second;
    } else if (features.missing.count(id)) {
      row[j] = model.impute_medians[j];
    } else {
      throw DataError("catalog mismatch: vector does not cover '" + id + "'");
    }
  }
  return predict_row(model, row.data());
}

std::vector<double> predict_table(const ForestModel& model, const FeatureTable& table) {
  if (table.hash() != model.catalog_hash) {
    throw DataError("catalog mismatch: table hash " + table.hash() + ", model expects " +
                    model.catalog_hash);
  }
  const std::vector<double> x = imputed_matrix(table, model.impute_medians);
  const std::size_t d = model.columns.size();
  std::vector<double> out(table.rows.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(table.rows.size()); ++i) {
    out[static_cast<std::size_t>(i)] =
        predict_row(model, &x[static_cast<std::size_t>(i) * d]);
  }
  return out;
}

// ============================================================================
// Partial dependence
// ============================================================================

double PartialDependence::range() const {
  if (surface.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(surface.begin(), surface.end());
  return *hi - *lo;
}

PartialDependence partial_dependence(const ForestModel& model,
                                     std::span<const std::string> features,
                                     std::span<const std::vector<double>> grids,
                                     const FeatureTable& background) {
  if (features.empty() || features.size() > 2) {
    throw DataError("partial dependence takes 1 or 2 features");
  }
  if (grids.size() != features.size()) throw DataError("one grid per feature required");
  if (background.rows.empty()) throw DataError("background table is empty");
  if (background.hash() != model.catalog_hash) {
    throw DataError("catalog mismatch between model and background table");
  }

  std::vector<std::size_t> idx;
  for (const std::string& id : features) {
    const auto it = std::find(model.columns.begin(), model.columns.end(), id);
    if (it == model.columns.end()) throw DataError("unknown feature '" + id + "'");
    idx.push_back(static_cast<std::size_t>(it - model.columns.begin()));
    if (grids[idx.size() - 1].empty()) throw DataError("empty grid for feature '" + id + "'");
  }

  const std::size_t d = model.columns.size();
  const std::vector<double> x = imputed_matrix(background, model.impute_medians);
  const std::size_t n = background.rows.size();

  PartialDependence pd;
  pd.features.assign(features.begin(), features.end());
  for (const auto& g : grids) pd.axes.push_back(g);
  const std::size_t rows_out = grids[0].size();
  const std::size_t cols_out = grids.size() == 2 ? grids[1].size() : 1;
  pd.surface.assign(rows_out * cols_out, 0.0);

#pragma omp parallel for schedule(dynamic) collapse(2)
  for (std::int64_t a = 0; a < static_cast<std::int64_t>(rows_out); ++a) {
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(cols_out); ++b) {
      std::vector<double> row(d);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(i * d),
                  x.begin() + static_cast<std::ptrdiff_t>((i + 1) * d), row.begin());
        row[idx[0]] = grids[0][static_cast<std::size_t>(a)];
        if (idx.size() == 2) row[idx[1]] = grids[1][static_cast<std::size_t>(b)];
        sum += predict_row(model, row.data());
      }
      pd.surface[static_cast<std::size_t>(a) * cols_out + static_cast<std::size_t>(b)] =
          sum / static_cast<double>(n);
    }
  }
  return pd;
}

// ============================================================================
// Serialization
// ============================================================================

std::string model_to_json(const ForestModel& model) {
  ordered_json j;
  j["format_version"] = 1;
  ordered_json cfg;
  cfg["n_trees"] = model.config.n_trees;
  cfg["min_samples_leaf"] = model.config.min_samples_leaf;
  cfg["max_depth"] = model.config.max_depth;
  cfg["features_per_split"] = model.config.features_per_split;
  cfg["bootstrap"] = model.config.bootstrap;
  cfg["seed"] = model.config.seed;
  j["config"] = std::move(cfg);
  j["catalog_hash"] = model.catalog_hash;
  ordered_json medians = ordered_json::object();
  for (std::size_t k = 0; k < model.columns.size(); ++k) {
    medians[model.columns[k]] = model.impute_medians[k];
  }
  j["impute_medians"] = std::move(medians);
  ordered_json trees = ordered_json::array();
  for (const Tree& tree : model.trees) {
    ordered_json nodes = ordered_json::array();
    for (const TreeNode& node : tree.nodes) {
      ordered_json nj;
      if (node.feature >= 0) {
        nj["f"] = model.columns[static_cast<std::size_t>(node.feature)];
        nj["t"] = node.threshold;
        nj["l"] = node.left;
        nj["r"] = node.right;
      } else {
        nj["leaf"] = node.leaf;
      }
      nodes.push_back(std::move(nj));
    }
    ordered_json tj;
    tj["nodes"] = std::move(nodes);
    trees.push_back(std::move(tj));
  }
  j["trees"] = std::move(trees);
  return j.dump();
}

void save_model(const std::string& path, const ForestModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << model_to_json(model) << '\n';
  if (!out) throw DataError("failed writing '" + path + "'");
}

ForestModel model_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw DataError(std::string("corrupt model file: ") + e.what());
  }
  if (!j.is_object() || !j.contains("format_version")) {
    throw DataError("corrupt model file: missing format_version");
  }
  if (!j["format_version"].is_number_integer() || j["format_version"].get<int>() != 1) {
    throw DataError("unsupported model format_version " + j["format_version"].dump() +
                    " (this build reads version 1)");
  }
  ForestModel model;
  try {
    const auto& cfg = j.at("config");
    model.config.n_trees = cfg.at("n_trees").get<int>();
    model.config.min_samples_leaf = cfg.at("min_samples_leaf").get<int>();
    model.config.max_depth = cfg.at("max_depth").get<int>();
    model.config.features_per_split = cfg.at("features_per_split").get<int>();
    model.config.bootstrap = cfg.at("bootstrap").get<bool>();
    model.config.seed = cfg.at("seed").get<std::uint64_t>();
    model.catalog_hash = j.at("catalog_hash").get<std::string>();

    std::map<std::string, std::size_t> col_index;
    for (const auto& [key, value] : j.at("impute_medians").items()) {
      col_index[key] = model.columns.size();
      model.columns.push_back(key);
      model.impute_medians.push_back(value.get<double>());
    }
    for (const auto& tj : j.at("trees")) {
      Tree tree;
      for (const auto& nj : tj.at("nodes")) {
        TreeNode node;
        if (nj.contains("leaf")) {
          node.leaf = nj.at("leaf").get<double>();
        } else {
          const std::string f = nj.at("f").get<std::string>();
          const auto it = col_index.find(f);
          if (it == col_index.end()) {
            throw DataError("corrupt model file: node references unknown feature '" + f + "'");
          }
          node.feature = static_cast<std::int32_t>(it->second);
          node.threshold = nj.at("t").get<double>();
          node.left = nj.at("l").get<std::int32_t>();
          node.right = nj.at("r").get<std::int32_t>();
          if (node.left < 0 || node.right < 0) {
            throw DataError("corrupt model file: dangling child index");
          }
        }
        tree.nodes.push_back(node);
      }
      if (tree.nodes.empty()) throw DataError("corrupt model file: empty tree");
      for (const TreeNode& node : tree.nodes) {
        if (node.feature >= 0 &&
            (node.left >= static_cast<std::int32_t>(tree.nodes.size()) ||
             node.right >= static_cast<std::int32_t>(tree.nodes.size()))) {
          throw DataError("corrupt model file: child index out of range");
        }
      }
      model.trees.push_back(std::move(tree));
    }
  } catch (const ordered_json::exception& e) {
    throw DataError(std::string("corrupt model file: ") + e.what());
  }
  if (catalog_hash(model.columns) != model.catalog_hash) {
    throw DataError("corrupt model file: catalog hash does not match its columns");
  }
  return model;
}

ForestModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace trace
