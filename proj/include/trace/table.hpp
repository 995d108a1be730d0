#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trace/corpus.hpp"
#include "trace/geometry.hpp"

namespace trace {

// ============================================================================
// Tabular feature dataset
// ============================================================================

struct TableRow {
  std::string conversation_id;
  std::vector<std::optional<double>> values;  // aligned with FeatureTable::columns
  std::optional<double> satisfaction;
  std::string user_id;
  std::string use_case;
};

// Rows over a fixed feature-column set (the 30-entry catalog, optionally
// extended with llm_score). Missing features stay missing; imputation is the
// model's job.
struct FeatureTable {
  std::vector<std::string> columns;
  std::vector<TableRow> rows;

  std::string hash() const;
  std::optional<std::size_t> column_index(const std::string& id) const;
};

// FNV-1a over the ordered column ids; any column change changes the hash, so
// models refuse inputs from a different catalog.
std::string catalog_hash(std::span<const std::string> column_ids);

// Hash of the standard 30-column catalog.
const std::string& trace_catalog_hash();

// ============================================================================
// Conversions
// ============================================================================

// Rows in input order, cells in catalog column order, missing as empty.
FeatureTable features_to_table(std::span<const FeatureVector> vectors);

// Same, with satisfaction / user / use-case metadata joined by conversation id.
FeatureTable features_to_table(std::span<const FeatureVector> vectors,
                               std::span<const Conversation> corpus);

std::vector<FeatureVector> table_to_features(const FeatureTable& table);

// ============================================================================
// CSV I/O (RFC 4180 quoting, LF line endings)
// ============================================================================
// Layout: conversation_id, <feature columns...>, satisfaction, user_id, use_case.

void write_table_csv(const std::string& path, const FeatureTable& table);
std::string table_to_csv(const FeatureTable& table);
FeatureTable read_table_csv(const std::string& path);
FeatureTable table_from_csv(const std::string& text);

// Shortest round-trip decimal rendering used for all numeric file output.
std::string format_double(double v);

}  // namespace trace
