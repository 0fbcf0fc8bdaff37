// Test fixtures: the canonical two-relation instance and random acyclic
// instances.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "joinss/relation.h"

namespace joinss::testing {

inline Tuple make_tuple(std::vector<Value> values, double weight, u64 ts = 0) {
  Tuple t;
  t.values = std::move(values);
  t.weight = weight;
  t.timestamp = ts;
  return t;
}

inline Relation make_relation(const std::string& name, std::vector<std::string> schema,
                              const std::vector<std::pair<std::vector<std::string>, double>>& rows) {
  Relation r(name, std::move(schema));
  for (const auto& [vals, w] : rows) {
    ValueVec values;
    for (const auto& v : vals) values.push_back(parse_value(v));
    r.add(make_tuple(std::move(values), w));
  }
  return r;
}

// R1(A,B) = {(a1,b1) w=1, (a2,b1) w=0.5}, R2(B,C) = {(b1,c1) w=0.5, (b1,c2) w=0.25}.
inline std::vector<Relation> canonical_relations() {
  return {make_relation("R1", {"A", "B"}, {{{"a1", "b1"}, 1.0}, {{"a2", "b1"}, 0.5}}),
          make_relation("R2", {"B", "C"}, {{{"b1", "c1"}, 0.5}, {{"b1", "c2"}, 0.25}})};
}

inline JoinQuery canonical_query() { return JoinQuery::from_relations(canonical_relations()); }

struct RandomInstanceOptions {
  int min_relations = 2;
  int max_relations = 5;
  int max_tuples = 40;
  int domain = 5;
  u128 max_results = 20000;
};

inline double random_weight(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> pick(0, 9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (pick(gen)) {
    case 0: return 1.0;
    case 1: return 0.5;
    case 2: return 0.25;
    case 3: return 0.0;
    case 4: return std::ldexp(1.0, -std::uniform_int_distribution<int>(3, 30)(gen));
    case 5: return 0.5 + 0.5 * unit(gen);
    default: return unit(gen);
  }
}

// Random tree of relations. Relation i > 0 shares one or two attributes with
// a random earlier relation and owns one or two private attributes.
inline std::vector<Relation> random_relations(std::mt19937_64& gen, const RandomInstanceOptions& opt) {
  std::uniform_int_distribution<int> count(opt.min_relations, opt.max_relations);
  const int k = count(gen);
  std::vector<std::vector<std::string>> schemas(k);
  int next_attr = 0;
  auto fresh = [&] { return "X" + std::to_string(next_attr++); };
  schemas[0] = {fresh(), fresh()};
  for (int i = 1; i < k; ++i) {
    const int parent = std::uniform_int_distribution<int>(0, i - 1)(gen);
    std::vector<std::string> shared = schemas[parent];
    std::shuffle(shared.begin(), shared.end(), gen);
    const int take = std::min<int>(static_cast<int>(shared.size()), std::uniform_int_distribution<int>(1, 2)(gen));
    schemas[i].assign(shared.begin(), shared.begin() + take);
    const int own = std::uniform_int_distribution<int>(1, 2)(gen);
    for (int a = 0; a < own; ++a) schemas[i].push_back(fresh());
    std::shuffle(schemas[i].begin(), schemas[i].end(), gen);
  }
  // Shuffle relation ids so the root is not always the first generated.
  std::vector<int> perm(k);
  for (int i = 0; i < k; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), gen);
  std::vector<Relation> out;
  std::uniform_int_distribution<int> tuples(1, opt.max_tuples);
  std::uniform_int_distribution<int> value(0, opt.domain - 1);
  for (int idx = 0; idx < k; ++idx) {
    const auto& schema = schemas[perm[idx]];
    Relation r("R" + std::to_string(idx + 1), schema);
    const int n = tuples(gen);
    for (int t = 0; t < n * 3 && static_cast<int>(r.size()) < n; ++t) {
      ValueVec values;
      for (std::size_t a = 0; a < schema.size(); ++a) values.push_back(static_cast<i64>(value(gen)));
      r.add(make_tuple(std::move(values), random_weight(gen)));
    }
    out.push_back(std::move(r));
  }
  return out;
}

// Random instance whose join size stays within opt.max_results.
inline JoinQuery random_query(std::mt19937_64& gen, const RandomInstanceOptions& opt = {}) {
  for (;;) {
    JoinQuery q = JoinQuery::from_relations(random_relations(gen, opt));
    if (count_join(q) <= opt.max_results) return q;
  }
}

}  // namespace joinss::testing
