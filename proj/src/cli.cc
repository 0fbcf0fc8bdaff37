// src/cli.cc

#include "joinss/cli.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "joinss/dynamic_index.h"
#include "joinss/io.h"
#include "joinss/log.h"
#include "joinss/oneshot.h"
#include "joinss/oracle.h"
#include "joinss/serialize.h"
#include "joinss/static_index.h"

namespace joinss {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct QueryFlags {
  std::string spec_path;
  std::string aggregator;
  int L = 0;
  bool fft = false;
  u64 seed = 0;
  CLI::Option* seed_option = nullptr;
};

void add_query_flags(CLI::App* cmd, QueryFlags& f, bool with_seed) {
  cmd->add_option("-q,--query", f.spec_path, "Query spec JSON")->required();
  cmd->add_option("--agg", f.aggregator, "Aggregator override")
      ->check(CLI::IsMember({"product", "min", "max", "sum"}));
  cmd->add_option("--L", f.L, "Bucket count override")->check(CLI::Range(1, 4096));
  cmd->add_flag("--fft", f.fft, "FFT / prefix-sum convolution");
  if (with_seed) f.seed_option = cmd->add_option("--seed", f.seed, "Seed (default: the query file's seed)");
}

QuerySpec load_spec(const QueryFlags& f) {
  QuerySpec spec = load_query_spec(f.spec_path);
  if (!f.aggregator.empty()) spec.aggregator = parse_aggregator(f.aggregator);
  if (f.L > 0) spec.L_override = f.L;
  if (f.seed_option && f.seed_option->count() > 0) spec.seed = f.seed;
  return spec;
}

PreprocessOptions preprocess_options(const QuerySpec& spec, bool fft, bool prefix_sums = true) {
  PreprocessOptions options;
  options.L_override = spec.L_override;
  options.convolution = fft ? ConvolutionMode::kFast : ConvolutionMode::kExact;
  options.prefix_sums = prefix_sums;
  options.result_cap = spec.result_cap;
  return options;
}

StaticIndex build_static(const QuerySpec& spec, bool fft, bool prefix_sums = true) {
  return StaticIndex::build(JoinQuery::from_relations(load_relations(spec)), spec.aggregator,
                            preprocess_options(spec, fft, prefix_sums));
}

std::string sample_line(const std::vector<std::string>& attributes, std::vector<ValueVec> rows) {
  std::sort(rows.begin(), rows.end());
  return results_to_json(attributes, rows).dump();
}

std::vector<ValueVec> static_values(const StaticIndex& idx, const std::vector<JoinResult>& sample) {
  std::vector<ValueVec> rows;
  rows.reserve(sample.size());
  for (const auto& r : sample) rows.push_back(idx.query().result_values(r));
  return rows;
}

std::vector<ValueVec> dynamic_values(const DynamicIndex& dyn, const std::vector<std::vector<std::size_t>>& sample) {
  std::vector<ValueVec> rows;
  rows.reserve(sample.size());
  for (const auto& r : sample) rows.push_back(dyn.result_values(r));
  return rows;
}

struct Replay {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> schemas;
  std::vector<StreamInsert> stream;
};

Replay load_replay(const QuerySpec& spec, const std::string& stream_path) {
  Replay r;
  const auto rels = load_relations(spec);
  for (const auto& rel : rels) {
    r.names.push_back(rel.name());
    r.schemas.push_back(rel.schema());
  }
  r.stream = stream_path.empty() ? stream_from_relations(rels)
                                 : parse_stream_csv(read_file(stream_path), r.names, r.schemas, stream_path);
  return r;
}

DynamicOptions dynamic_options(const QuerySpec& spec, bool fft) {
  DynamicOptions options;
  options.L_override = spec.L_override;
  options.convolution = fft ? ConvolutionMode::kFast : ConvolutionMode::kExact;
  return options;
}

int cmd_build(const QueryFlags& f, const std::string& output, std::ostream& out) {
  const QuerySpec spec = load_spec(f);
  const StaticIndex idx = build_static(spec, f.fft);
  save_index(idx, output);
  out << "{\"index\":" << nlohmann::json(output).dump() << ",\"input_size\":" << idx.query().input_size()
      << ",\"L\":" << idx.L() << ",\"join_size\":" << to_string(idx.total()) << "}\n";
  return kExitOk;
}

int cmd_sample(const std::string& index_path, std::size_t n, u64 seed, std::ostream& out) {
  const StaticIndex idx = load_index(index_path);
  const Rng base(seed);
  for (std::size_t q = 0; q < n; ++q) {
    Rng rng = base.derive_child(q);
    out << sample_line(idx.query().attributes(), static_values(idx, idx.query_sample(rng))) << "\n";
  }
  return kExitOk;
}

int cmd_oneshot(const QueryFlags& f, std::size_t n, bool eager_y, std::ostream& out) {
  const QuerySpec spec = load_spec(f);
  const StaticIndex idx = build_static(spec, f.fft, false);
  const Rng base(spec.seed);
  for (std::size_t q = 0; q < n; ++q) {
    Rng rng = base.derive_child(q);
    out << sample_line(idx.query().attributes(), static_values(idx, oneshot_sample(idx, rng, eager_y))) << "\n";
  }
  return kExitOk;
}

int cmd_dynamic_replay(const QueryFlags& f, const std::string& stream_path, bool maintain, std::size_t n,
                       std::ostream& out) {
  const QuerySpec spec = load_spec(f);
  const Replay r = load_replay(spec, stream_path);
  DynamicIndex dyn(r.names, r.schemas, spec.aggregator, dynamic_options(spec, f.fft));
  const Rng base(spec.seed);
  if (maintain) {
    OneShotMaintainer maintainer(dyn, base.derive_child(0));
    for (const auto& ins : r.stream) maintainer.insert(ins.relation, ins.tuple);
    out << sample_line(dyn.attributes(), dynamic_values(dyn, maintainer.sample())) << "\n";
    return kExitOk;
  }
  for (const auto& ins : r.stream) dyn.insert(ins.relation, ins.tuple);
  for (std::size_t q = 0; q < n; ++q) {
    Rng rng = base.derive_child(q);
    std::vector<std::vector<std::size_t>> rows;
    for (auto& res : dyn.query_sample(rng)) rows.push_back(std::move(res.rows));
    out << sample_line(dyn.attributes(), dynamic_values(dyn, rows)) << "\n";
  }
  return kExitOk;
}

class TrialIndexer {
 public:
  TrialIndexer(const JoinQuery& q, const std::vector<JoinResult>& results) {
    for (const auto& r : results) {
      labels_.push_back(q.result_values(r));
      expected_.push_back(r.probability);
      index_.emplace(labels_.back(), labels_.size() - 1);
    }
  }

  std::vector<std::size_t> indices(const std::vector<ValueVec>& sample) const {
    std::vector<std::size_t> out;
    out.reserve(sample.size());
    for (const auto& v : sample) {
      const auto it = index_.find(v);
      if (it == index_.end()) throw ContractViolation("sampled a tuple combination outside the join");
      out.push_back(it->second);
    }
    return out;
  }

  const std::vector<ValueVec>& labels() const { return labels_; }
  const std::vector<double>& expected() const { return expected_; }

 private:
  std::vector<ValueVec> labels_;
  std::vector<double> expected_;
  std::map<ValueVec, std::size_t> index_;
};

int cmd_verify(const QueryFlags& f, u64 trials, const std::string& mode, const std::string& stream_path,
               std::ostream& out) {
  const QuerySpec spec = load_spec(f);
  const Rng base(spec.seed);
  nlohmann::json j;
  BatchStats batch;
  if (mode == "dynamic") {
    const Replay r = load_replay(spec, stream_path);
    DynamicIndex dyn(r.names, r.schemas, spec.aggregator, dynamic_options(spec, f.fft));
    for (const auto& ins : r.stream) dyn.insert(ins.relation, ins.tuple);
    const JoinQuery snap = dyn.snapshot();
    const TrialIndexer indexer(snap, materialize_join(snap, dyn.aggregator(), spec.result_cap));
    FrequencyAccumulator acc(indexer.expected());
    for (u64 t = 0; t < trials; ++t) {
      Rng rng = base.derive_child(t);
      std::vector<std::vector<std::size_t>> rows;
      for (auto& res : dyn.query_sample(rng, &batch)) rows.push_back(std::move(res.rows));
      acc.add_trial(indexer.indices(dynamic_values(dyn, rows)));
    }
    j = report_to_json(acc.report(), indexer.labels(), snap.attributes());
  } else {
    const StaticIndex idx = build_static(spec, f.fft, mode == "static");
    const TrialIndexer indexer(idx.query(), materialize_join(idx.query(), idx.aggregator(), spec.result_cap));
    FrequencyAccumulator acc(indexer.expected());
    for (u64 t = 0; t < trials; ++t) {
      Rng rng = base.derive_child(t);
      const auto sample = mode == "static" ? idx.query_sample(rng, &batch)
                                           : oneshot_sample(idx, rng, false, nullptr, &batch);
      acc.add_trial(indexer.indices(static_values(idx, sample)));
    }
    j = report_to_json(acc.report(), indexer.labels(), idx.query().attributes());
  }
  j["mode"] = mode;
  j["accesses"] = batch.accesses;
  j["dummies"] = batch.dummies;
  out << j.dump(2) << "\n";
  return j["passed"].get<bool>() ? kExitOk : kExitVerifyFailed;
}

// The first ceil(fraction * n) tuples of each relation, in file order.
std::vector<Relation> prefix_relations(const std::vector<Relation>& rels, double fraction) {
  std::vector<Relation> out;
  for (const auto& rel : rels) {
    Relation r(rel.name(), rel.schema());
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(rel.tuples().size()))));
    for (std::size_t k = 0; k < std::min(keep, rel.tuples().size()); ++k) r.add(rel.tuples()[k]);
    out.push_back(std::move(r));
  }
  return out;
}

int cmd_bench(const QueryFlags& f, int steps, int queries, std::ostream& out) {
  const QuerySpec spec = load_spec(f);
  const auto rels = load_relations(spec);
  const Rng base(spec.seed);
  out << "step,N,join_size,build_seconds,query_seconds,oneshot_seconds,sample_size\n";
  for (int s = 1; s <= steps; ++s) {
    const JoinQuery q = JoinQuery::from_relations(prefix_relations(rels, std::ldexp(1.0, s - steps)));
    auto start = Clock::now();
    const StaticIndex idx = StaticIndex::build(q, spec.aggregator, preprocess_options(spec, f.fft));
    const double build_seconds = seconds_since(start);

    std::size_t sample_size = 0;
    start = Clock::now();
    for (int k = 0; k < queries; ++k) {
      Rng rng = base.derive_child(static_cast<u64>(k));
      sample_size = idx.query_sample(rng).size();
    }
    const double query_seconds = seconds_since(start) / std::max(1, queries);

    start = Clock::now();
    Rng rng = base.derive_child(0);
    OneShotOptions options;
    options.preprocess = preprocess_options(spec, f.fft, false);
    oneshot_sample(q, spec.aggregator, rng, options);
    const double oneshot_seconds = seconds_since(start);

    out << s << "," << q.input_size() << "," << to_string(idx.total()) << "," << build_seconds << ","
        << query_seconds << "," << oneshot_seconds << "," << sample_size << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Subset sampling over acyclic joins", "joinss"};
  app.require_subcommand(1);

  QueryFlags build_f, oneshot_f, replay_f, verify_f, bench_f;
  std::string output, index_path, stream_path, mode = "static";
  std::size_t n = 1;
  u64 seed = 0, trials = 100000;
  bool maintain = false, eager_y = false;
  int steps = 4, queries = 5;

  auto* build = app.add_subcommand("build", "Preprocess a query and write the index");
  add_query_flags(build, build_f, false);
  build->add_option("-o,--output", output, "Index file")->required();

  auto* sample = app.add_subcommand("sample", "Draw independent samples from a stored index");
  sample->add_option("-i,--index", index_path, "Index file")->required();
  sample->add_option("-n", n, "Number of samples")->check(CLI::NonNegativeNumber);
  sample->add_option("--seed", seed, "Seed");

  auto* oneshot = app.add_subcommand("oneshot", "Preprocess and draw with batched access");
  add_query_flags(oneshot, oneshot_f, true);
  oneshot->add_option("-n", n, "Number of samples")->check(CLI::NonNegativeNumber);
  oneshot->add_flag("--eager-y", eager_y, "Materialize every Y array up front");

  auto* dyn = app.add_subcommand("dynamic-replay", "Replay insertions into the dynamic index, then sample");
  add_query_flags(dyn, replay_f, true);
  dyn->add_option("--stream", stream_path, "Insertion stream CSV (default: relations ordered by ts)");
  dyn->add_flag("--maintain-oneshot", maintain, "Maintain one sample during the replay");
  dyn->add_option("-n", n, "Number of samples")->check(CLI::NonNegativeNumber);

  auto* verify = app.add_subcommand("verify", "Compare sampled frequencies with exact probabilities");
  add_query_flags(verify, verify_f, true);
  verify->add_option("--trials", trials, "Number of samples")->check(CLI::PositiveNumber);
  verify->add_option("--mode", mode, "Sampler")->check(CLI::IsMember({"static", "oneshot", "dynamic"}));
  verify->add_option("--stream", stream_path, "Insertion stream CSV for dynamic mode");

  auto* bench = app.add_subcommand("bench", "Time build, query and one-shot on growing prefixes");
  add_query_flags(bench, bench_f, true);
  bench->add_option("--scale-steps", steps, "Number of prefix sizes")->check(CLI::Range(1, 30));
  bench->add_option("--queries", queries, "Queries timed per step")->check(CLI::Range(1, 1000000));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (build->parsed()) return cmd_build(build_f, output, out);
    if (sample->parsed()) return cmd_sample(index_path, n, seed, out);
    if (oneshot->parsed()) return cmd_oneshot(oneshot_f, n, eager_y, out);
    if (dyn->parsed()) return cmd_dynamic_replay(replay_f, stream_path, maintain, n, out);
    if (verify->parsed()) return cmd_verify(verify_f, trials, mode, stream_path, out);
    if (bench->parsed()) return cmd_bench(bench_f, steps, queries, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace joinss
