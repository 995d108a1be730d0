#include "trace/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include "trace/error.hpp"

namespace trace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string catalog_hash(std::span<const std::string> column_ids) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](char c) { h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL; };
  for (const std::string& id : column_ids) {
    for (char c : id) mix(c);
    mix(',');
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const std::string& trace_catalog_hash() {
  static const std::string h = catalog_hash(feature_ids());
  return h;
}

std::string FeatureTable::hash() const { return catalog_hash(columns); }

std::optional<std::size_t> FeatureTable::column_index(const std::string& id) const {
  const auto it = std::find(columns.begin(), columns.end(), id);
  if (it == columns.end()) return std::nullopt;
  return static_cast<std::size_t>(it - columns.begin());
}

// ============================================================================
// Conversions
// ============================================================================

namespace {

TableRow row_from_vector(const FeatureVector& fv, const std::vector<std::string>& columns) {
  TableRow row;
  row.conversation_id = fv.conversation_id;
  row.values.reserve(columns.size());
  for (const std::string& id : columns) {
    const auto vit = fv.values.find(id);
    const bool missing = fv.missing.count(id) > 0;
    if (vit != fv.values.end() && missing) {
      throw DataError("feature '" + id + "' is both present and missing on '" +
                      fv.conversation_id + "'");
    }
    if (vit != fv.values.end()) {
      row.values.emplace_back(vit->second);
    } else if (missing) {
      row.values.emplace_back(std::nullopt);
    } else {
      throw DataError("feature vector for '" + fv.conversation_id +
                      "' does not cover catalog column '" + id + "'");
    }
  }
  return row;
}

}  // namespace

FeatureTable features_to_table(std::span<const FeatureVector> vectors) {
  FeatureTable table;
  table.columns = feature_ids();
  for (const FeatureVector& fv : vectors) table.rows.push_back(row_from_vector(fv, table.columns));
  return table;
}

FeatureTable features_to_table(std::span<const FeatureVector> vectors,
                               std::span<const Conversation> corpus) {
  std::map<std::string, const Conversation*> by_id;
  for (const Conversation& c : corpus) by_id[c.conversation_id] = &c;
  FeatureTable table = features_to_table(vectors);
  for (TableRow& row : table.rows) {
    const auto it = by_id.find(row.conversation_id);
    if (it == by_id.end()) {
      throw DataError("no conversation metadata for '" + row.conversation_id + "'");
    }
    row.satisfaction = static_cast<double>(it->second->satisfaction);
    row.user_id = it->second->user_id;
    row.use_case = it->second->use_case;
  }
  return table;
}

std::vector<FeatureVector> table_to_features(const FeatureTable& table) {
  std::vector<FeatureVector> out;
  out.reserve(table.rows.size());
  for (const TableRow& row : table.rows) {
    FeatureVector fv;
    fv.conversation_id = row.conversation_id;
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
      if (row.values[j]) {
        fv.values[table.columns[j]] = *row.values[j];
      } else {
        fv.missing.insert(table.columns[j]);
      }
    }
    out.push_back(std::move(fv));
  }
  return out;
}

// ============================================================================
// CSV
// ============================================================================

namespace {

bool needs_quoting(const std::string& s) {
  return s.find_first_of(",\"\r\n") != std::string::npos;
}

std::string csv_field(const std::string& s) {
  if (!needs_quoting(s)) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// Splits one logical CSV record; the caller guarantees quotes are balanced.
std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_number(const std::string& s, std::size_t line_no, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw DataError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  }
  return v;
}

}  // namespace

std::string table_to_csv(const FeatureTable& table) {
  std::ostringstream out;
  out << "conversation_id";
  for (const std::string& id : table.columns) out << ',' << csv_field(id);
  out << ",satisfaction,user_id,use_case\n";
  for (const TableRow& row : table.rows) {
    out << csv_field(row.conversation_id);
    for (const auto& v : row.values) {
      out << ',';
      if (v) out << format_double(*v);
    }
    out << ',';
    if (row.satisfaction) out << format_double(*row.satisfaction);
    out << ',' << csv_field(row.user_id) << ',' << csv_field(row.use_case) << '\n';
  }
  return out.str();
}

void write_table_csv(const std::string& path, const FeatureTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << table_to_csv(table);
  if (!out) throw DataError("failed writing '" + path + "'");
}

FeatureTable table_from_csv(const std::string& text) {
  // Logical records: newlines inside balanced quotes belong to the field.
  std::vector<std::string> records;
  std::string cur;
  bool quoted = false;
  for (char c : text) {
    if (c == '"') quoted = !quoted;
    if (c == '\n' && !quoted) {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      records.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) records.push_back(std::move(cur));
  if (records.empty()) throw DataError("empty CSV: missing header");

  const std::vector<std::string> header = split_record(records[0]);
  if (header.size() < 4 || header.front() != "conversation_id" ||
      header[header.size() - 3] != "satisfaction" || header[header.size() - 2] != "user_id" ||
      header.back() != "use_case") {
    throw DataError("unexpected CSV header layout");
  }

  FeatureTable table;
  table.columns.assign(header.begin() + 1, header.end() - 3);
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].empty()) continue;
    const std::vector<std::string> fields = split_record(records[r]);
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(r + 1) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    TableRow row;
    row.conversation_id = fields[0];
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
      const std::string& cell = fields[1 + j];
      if (cell.empty()) {
        row.values.emplace_back(std::nullopt);
      } else {
        row.values.emplace_back(parse_number(cell, r + 1, "feature value"));
      }
    }
    const std::string& sat = fields[fields.size() - 3];
    if (!sat.empty()) row.satisfaction = parse_number(sat, r + 1, "satisfaction");
    row.user_id = fields[fields.size() - 2];
    row.use_case = fields[fields.size() - 1];
    table.rows.push_back(std::move(row));
  }
  return table;
}

FeatureTable read_table_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return table_from_csv(buf.str());
}

}  // namespace trace
