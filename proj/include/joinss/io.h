// include/joinss/io.h
//
// Query files, CSV relations, replay streams and JSON output.
//
// A query spec is a JSON object:
//   {"relations": [{"name": "R1", "file": "r1.csv", "schema": ["A", "B"]}, ...],
//    "aggregator": "product", "seed": 7, "L_override": 12, "result_cap": 1000000}
// File paths are relative to the query file's directory. "schema" may be omitted,
// in which case the CSV header (minus weight and ts) is used.
//
// A relation CSV has a header naming the attributes, an optional "ts" column
// and a mandatory final "weight" column.
//
// A replay stream CSV has the header "relation,weight,values..." and one row
// per insertion: relation name, weight, then the values in schema order.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "joinss/dynamic_index.h"
#include "joinss/oracle.h"
#include "joinss/relation.h"
#include "joinss/score.h"

namespace joinss {

struct RelationSpec {
  std::string name;
  std::string file;
  std::vector<std::string> schema;  // empty: taken from the header
};

struct QuerySpec {
  std::vector<RelationSpec> relations;
  AggregatorKind aggregator = AggregatorKind::kProduct;
  u64 seed = 0;
  std::optional<int> L_override;
  std::size_t result_cap = kDefaultResultCap;
  std::string base_dir;  // directory the relative file paths resolve against
};

QuerySpec parse_query_spec(const nlohmann::json& j, const std::string& base_dir = ".");
QuerySpec load_query_spec(const std::string& path);

// Splits one CSV line; double quotes may wrap a field and "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line);

// Parses a relation CSV. Errors carry "<file>:<line>".
Relation parse_relation_csv(const std::string& text, const std::string& name, std::vector<std::string> schema,
                            const std::string& file_label);
std::vector<Relation> load_relations(const QuerySpec& spec);

struct StreamInsert {
  std::size_t relation = 0;
  Tuple tuple;
};

std::vector<StreamInsert> parse_stream_csv(const std::string& text, const std::vector<std::string>& names,
                                           const std::vector<std::vector<std::string>>& schemas,
                                           const std::string& file_label);
// Insertions in (ts, relation, file order) when no stream file is given.
std::vector<StreamInsert> stream_from_relations(const std::vector<Relation>& relations);

std::string read_file(const std::string& path);

nlohmann::json value_to_json(const Value& v);
// One JSON object per result, keys sorted by attribute name.
nlohmann::json results_to_json(const std::vector<std::string>& attributes, const std::vector<ValueVec>& rows);
nlohmann::json report_to_json(const FrequencyReport& report, const std::vector<ValueVec>& labels,
                              const std::vector<std::string>& attributes);

}  // namespace joinss
