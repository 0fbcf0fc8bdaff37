// src/io.cc

#include "joinss/io.h"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace joinss {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string where(const std::string& file, std::size_t line) { return file + ":" + std::to_string(line); }

double parse_weight(const std::string& token, const std::string& loc) {
  const std::string t = trim(token);
  if (t.empty()) throw ParseError(loc + ": empty weight");
  char* end = nullptr;
  errno = 0;
  const double w = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) throw ParseError(loc + ": weight is not a number: " + t);
  if (!(w >= 0.0 && w <= 1.0)) throw ParseError(loc + ": weight outside [0,1]: " + t);
  return w;
}

u64 parse_ts(const std::string& token, const std::string& loc) {
  const std::string t = trim(token);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
    throw ParseError(loc + ": ts must be a nonnegative integer: " + t);
  errno = 0;
  const u64 v = std::strtoull(t.c_str(), nullptr, 10);
  if (errno == ERANGE) throw ParseError(loc + ": ts out of range: " + t);
  return v;
}

// Lines of text with their 1-based numbers, skipping blank lines.
std::vector<std::pair<std::size_t, std::string>> numbered_lines(const std::string& text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    out.emplace_back(n, line);
  }
  return out;
}

}  // namespace

QuerySpec parse_query_spec(const nlohmann::json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ParseError("query spec must be a JSON object");
  QuerySpec spec;
  spec.base_dir = base_dir;
  for (const auto& [key, value] : j.items())
    if (key != "relations" && key != "aggregator" && key != "seed" && key != "L_override" && key != "result_cap")
      throw ParseError("query spec: unknown field '" + key + "'");
  if (!j.contains("relations") || !j["relations"].is_array() || j["relations"].empty())
    throw ParseError("query spec: 'relations' must be a nonempty array");
  std::set<std::string> names;
  for (const auto& r : j["relations"]) {
    RelationSpec rs;
    if (!r.is_object() || !r.contains("name") || !r["name"].is_string() || !r.contains("file") || !r["file"].is_string())
      throw ParseError("query spec: every relation needs string fields 'name' and 'file'");
    rs.name = r["name"].get<std::string>();
    rs.file = r["file"].get<std::string>();
    if (r.contains("schema")) {
      if (!r["schema"].is_array() || r["schema"].empty())
        throw ParseError("query spec: schema of " + rs.name + " must be a nonempty array");
      for (const auto& a : r["schema"]) {
        if (!a.is_string()) throw ParseError("query spec: schema of " + rs.name + " must list strings");
        rs.schema.push_back(a.get<std::string>());
      }
    }
    if (!names.insert(rs.name).second) throw ParseError("query spec: duplicate relation name " + rs.name);
    spec.relations.push_back(std::move(rs));
  }
  if (j.contains("aggregator")) {
    if (!j["aggregator"].is_string()) throw ParseError("query spec: 'aggregator' must be a string");
    spec.aggregator = parse_aggregator(j["aggregator"].get<std::string>());
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ParseError("query spec: 'seed' must be a nonnegative integer");
    spec.seed = j["seed"].get<u64>();
  }
  if (j.contains("L_override") && !j["L_override"].is_null()) {
    if (!j["L_override"].is_number_integer() || j["L_override"].get<i64>() < 1 || j["L_override"].get<i64>() > 4096)
      throw ParseError("query spec: 'L_override' must be an integer in [1, 4096]");
    spec.L_override = j["L_override"].get<int>();
  }
  if (j.contains("result_cap")) {
    if (!j["result_cap"].is_number_unsigned()) throw ParseError("query spec: 'result_cap' must be a positive integer");
    spec.result_cap = j["result_cap"].get<std::size_t>();
  }
  return spec;
}

QuerySpec load_query_spec(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_query_spec(j, dir.empty() ? "." : dir.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field");
  out.push_back(trim(field));
  return out;
}

Relation parse_relation_csv(const std::string& text, const std::string& name, std::vector<std::string> schema,
                            const std::string& file_label) {
  const auto lines = numbered_lines(text);
  if (lines.empty()) throw ParseError(where(file_label, 1) + ": missing header row");
  std::vector<std::string> header;
  try {
    header = split_csv_line(lines[0].second);
  } catch (const ParseError& e) {
    throw ParseError(where(file_label, lines[0].first) + ": " + e.what());
  }
  const std::string hloc = where(file_label, lines[0].first);
  if (header.empty() || header.back() != "weight") throw ParseError(hloc + ": final column must be 'weight'");
  std::optional<std::size_t> ts_col;
  std::vector<std::string> attrs;
  std::vector<std::size_t> attr_cols;
  for (std::size_t c = 0; c + 1 < header.size(); ++c) {
    if (header[c] == "ts") {
      if (ts_col) throw ParseError(hloc + ": repeated 'ts' column");
      ts_col = c;
      continue;
    }
    if (header[c].empty()) throw ParseError(hloc + ": empty attribute name");
    if (header[c] == "weight") throw ParseError(hloc + ": 'weight' must be the final column only");
    attrs.push_back(header[c]);
    attr_cols.push_back(c);
  }
  if (attrs.empty()) throw ParseError(hloc + ": no attribute columns");
  if (std::set<std::string>(attrs.begin(), attrs.end()).size() != attrs.size())
    throw ParseError(hloc + ": repeated attribute name");
  if (schema.empty()) schema = attrs;
  if (std::set<std::string>(schema.begin(), schema.end()) != std::set<std::string>(attrs.begin(), attrs.end()) ||
      schema.size() != attrs.size())
    throw ParseError(hloc + ": header attributes do not match the schema of " + name);
  // Column of each schema attribute.
  std::vector<std::size_t> col_of(schema.size());
  for (std::size_t a = 0; a < schema.size(); ++a)
    col_of[a] = attr_cols[static_cast<std::size_t>(std::find(attrs.begin(), attrs.end(), schema[a]) - attrs.begin())];

  Relation rel(name, schema);
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const std::string loc = where(file_label, lines[k].first);
    std::vector<std::string> fields;
    try {
      fields = split_csv_line(lines[k].second);
    } catch (const ParseError& e) {
      throw ParseError(loc + ": " + e.what());
    }
    if (fields.size() != header.size())
      throw ParseError(loc + ": expected " + std::to_string(header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    Tuple t;
    for (std::size_t a = 0; a < schema.size(); ++a) t.values.push_back(parse_value(fields[col_of[a]]));
    t.weight = parse_weight(fields.back(), loc);
    t.timestamp = ts_col ? parse_ts(fields[*ts_col], loc) : 0;
    if (!rel.add(std::move(t))) throw ParseError(loc + ": duplicate row in " + name);
  }
  return rel;
}

std::vector<Relation> load_relations(const QuerySpec& spec) {
  std::vector<Relation> out;
  for (const auto& rs : spec.relations) {
    std::filesystem::path p(rs.file);
    if (p.is_relative()) p = std::filesystem::path(spec.base_dir) / p;
    out.push_back(parse_relation_csv(read_file(p.string()), rs.name, rs.schema, p.string()));
  }
  return out;
}

std::vector<StreamInsert> parse_stream_csv(const std::string& text, const std::vector<std::string>& names,
                                           const std::vector<std::vector<std::string>>& schemas,
                                           const std::string& file_label) {
  const auto lines = numbered_lines(text);
  if (lines.empty()) throw ParseError(where(file_label, 1) + ": missing header row");
  const auto header = split_csv_line(lines[0].second);
  if (header.size() < 2 || header[0] != "relation" || header[1] != "weight")
    throw ParseError(where(file_label, lines[0].first) + ": header must start with 'relation,weight'");
  std::vector<StreamInsert> out;
  std::vector<std::set<ValueVec>> seen(names.size());
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const std::string loc = where(file_label, lines[k].first);
    std::vector<std::string> fields;
    try {
      fields = split_csv_line(lines[k].second);
    } catch (const ParseError& e) {
      throw ParseError(loc + ": " + e.what());
    }
    if (fields.size() < 2) throw ParseError(loc + ": expected relation and weight");
    const auto it = std::find(names.begin(), names.end(), fields[0]);
    if (it == names.end()) throw ParseError(loc + ": unknown relation " + fields[0]);
    const std::size_t r = static_cast<std::size_t>(it - names.begin());
    if (fields.size() != 2 + schemas[r].size())
      throw ParseError(loc + ": relation " + fields[0] + " expects " + std::to_string(schemas[r].size()) + " values");
    StreamInsert ins;
    ins.relation = r;
    ins.tuple.weight = parse_weight(fields[1], loc);
    for (std::size_t a = 2; a < fields.size(); ++a) ins.tuple.values.push_back(parse_value(fields[a]));
    ins.tuple.timestamp = out.size();
    if (!seen[r].insert(ins.tuple.values).second) throw ParseError(loc + ": duplicate row in " + fields[0]);
    out.push_back(std::move(ins));
  }
  return out;
}

std::vector<StreamInsert> stream_from_relations(const std::vector<Relation>& relations) {
  std::vector<StreamInsert> out;
  for (std::size_t r = 0; r < relations.size(); ++r)
    for (const auto& t : relations[r].tuples()) out.push_back({r, t});
  std::stable_sort(out.begin(), out.end(),
                   [](const StreamInsert& a, const StreamInsert& b) { return a.tuple.timestamp < b.tuple.timestamp; });
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json value_to_json(const Value& v) {
  if (const auto* n = std::get_if<i64>(&v)) return *n;
  return std::get<std::string>(v);
}

nlohmann::json results_to_json(const std::vector<std::string>& attributes, const std::vector<ValueVec>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json obj = nlohmann::json::object();
    for (std::size_t a = 0; a < attributes.size(); ++a) obj[attributes[a]] = value_to_json(row[a]);
    arr.push_back(std::move(obj));
  }
  return arr;
}

nlohmann::json report_to_json(const FrequencyReport& report, const std::vector<ValueVec>& labels,
                              const std::vector<std::string>& attributes) {
  auto finite = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["trials"] = report.trials;
  j["passed"] = report.passed();
  j["max_abs_z"] = finite(report.max_abs_z);
  j["exact_failures"] = report.exact_failures;
  j["mean_size"] = report.mean_size;
  j["expected_mean"] = report.expected_mean;
  j["relative_mean_error"] = finite(report.relative_mean_error());
  j["size_test"] = {{"statistic", finite(report.size_test.statistic)},
                    {"dof", report.size_test.dof},
                    {"p_value", finite(report.size_test.p_value)}};
  j["correlations_tracked"] = report.correlations_tracked;
  j["max_abs_correlation"] = finite(report.max_abs_correlation);
  j["thresholds"] = {{"max_abs_z", report.thresholds.max_abs_z},
                     {"alpha", report.thresholds.alpha},
                     {"max_abs_correlation", report.thresholds.max_abs_correlation}};
  nlohmann::json results = nlohmann::json::array();
  for (std::size_t k = 0; k < report.results.size(); ++k) {
    const auto& r = report.results[k];
    nlohmann::json e;
    if (k < labels.size()) e["result"] = results_to_json(attributes, {labels[k]})[0];
    e["expected"] = r.expected;
    e["observed"] = r.observed;
    if (r.exact) e["exact"] = true;
    else e["z"] = finite(r.z);
    if (r.failed) e["failed"] = true;
    results.push_back(std::move(e));
  }
  j["results"] = std::move(results);
  return j;
}

}  // namespace joinss
