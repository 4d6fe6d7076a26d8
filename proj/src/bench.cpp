#include "abtm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "abtm/error.hpp"
#include "abtm/expr.hpp"
#include "abtm/tree.hpp"

namespace abtm::bench {

std::string_view to_string(Mode mode) noexcept { return mode == Mode::Dense ? "dense" : "sparse"; }

std::optional<Mode> parse_mode(std::string_view text) noexcept {
  if (text == "dense") return Mode::Dense;
  if (text == "sparse") return Mode::Sparse;
  return std::nullopt;
}

void BenchConfig::check() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (tree_count < 1) bad("tree count must be at least 1");
  if (height.lo < 1 || height.hi < height.lo) bad("height range must be non-empty and start at 1 or more");
  if (children.lo < 1 || children.hi < children.lo) bad("children range must be non-empty and start at 1 or more");
  if (samples < 0) bad("sample count must not be negative");
  if (modes.empty()) bad("no benchmark mode selected");
  if (tiers.empty()) bad("no condition tier configured");
  for (int t : tiers) {
    if (t < 1) bad("condition tiers must have at least one term");
  }
  if (repetitions < 1) bad("repetitions must be at least 1");
  if (target_nodes && *target_nodes < 1) bad("target node count must be positive");
}

namespace {

std::uint64_t splitmix(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

int uniform(std::mt19937_64& rng, Range r) { return std::uniform_int_distribution<int>(r.lo, r.hi)(rng); }

struct Generator {
  std::mt19937_64 rng;
  const BenchConfig& cfg;
  int height;
  int tier;
  int next_id = 0;

  NodeDef make(int depth) {
    NodeDef n;
    int id = next_id++;
    if (depth + 1 < height) {  // height counts node levels, root included
      static constexpr NodeKind kinds[] = {NodeKind::Sequence, NodeKind::Selector, NodeKind::Skipper};
      n.kind = kinds[std::uniform_int_distribution<int>(0, 2)(rng)];
      n.name = "n" + std::to_string(id);
      int k = uniform(rng, cfg.children);
      for (int i = 0; i < k; ++i) n.children.push_back(make(depth + 1));
      return n;
    }
    if (std::bernoulli_distribution(0.5)(rng)) {
      n.kind = NodeKind::Condition;
      n.name = "c" + std::to_string(id);
      std::string guard = n.name + "_0 > 0.5";
      for (int t = 1; t < tier; ++t) guard += " and " + n.name + "_" + std::to_string(t) + " < 0.5";
      n.condition.rules.push_back({parse_expr(guard), NodeState::Success});
      n.condition.rules.push_back({std::nullopt, NodeState::Running});
    } else {
      n.kind = NodeKind::Action;
      n.name = "a" + std::to_string(id);
      n.action.assignments.push_back({n.name + "_out", parse_expr("1"), Expr::kUnbound});
    }
    return n;
  }
};

void collect(const NodeDef& n, std::vector<const NodeDef*>& conditions, std::vector<std::string>& outputs,
             std::size_t& count) {
  ++count;
  if (n.kind == NodeKind::Condition) conditions.push_back(&n);
  if (n.kind == NodeKind::Action) {
    for (const auto& a : n.action.assignments) outputs.push_back(a.target);
  }
  for (const auto& c : n.children) collect(c, conditions, outputs, count);
}

bool same_bits(double a, double b) {
  std::uint64_t x;
  std::uint64_t y;
  std::memcpy(&x, &a, 8);
  std::memcpy(&y, &b, 8);
  return x == y;
}

std::string render(const Sample& s) {
  std::string out = "{";
  for (const auto& [k, v] : s) {
    if (out.size() > 1) out += ", ";
    out += k + ": " + format_number(v);
  }
  return out + "}";
}

std::vector<double> initial_primaries(const TreeDefinition& def, const std::vector<const NodeDef*>& conditions) {
  std::map<std::string, double, std::less<>> initial;
  for (const auto& d : def.declarations) initial.emplace(d.key, d.initial);
  std::vector<double> out;
  for (const NodeDef* c : conditions) {
    auto it = initial.find(c->name + "_0");
    out.push_back(it == initial.end() ? 0.0 : it->second);
  }
  return out;
}

template <class Fn>
std::uint64_t time_ns(Fn&& fn) {
  auto t0 = std::chrono::steady_clock::now();
  fn();
  auto t1 = std::chrono::steady_clock::now();
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
}

}  // namespace

std::uint64_t tree_seed(std::uint64_t base, int index) noexcept {
  return splitmix(base ^ splitmix(static_cast<std::uint64_t>(index) + 1));
}

TreeDefinition generate_random_tree(std::uint64_t seed, const BenchConfig& cfg, int tier, TreeShape* shape) {
  Generator g{std::mt19937_64(seed), cfg, 0, tier};
  g.height = uniform(g.rng, cfg.height);
  TreeDefinition def;
  def.root = g.make(0);

  // Declarations make scopes explicit: condition inputs are Input, action
  // targets Output, so neither side feeds the other.
  std::vector<const NodeDef*> conditions;
  std::vector<std::string> outputs;
  std::size_t count = 0;
  collect(def.root, conditions, outputs, count);
  for (const NodeDef* c : conditions) {
    for (int t = 0; t < tier; ++t) def.declarations.push_back({c->name + "_" + std::to_string(t), Scope::Input, 0.0, false});
  }
  for (const auto& o : outputs) def.declarations.push_back({o, Scope::Output, 0.0, false});
  def.declarations.push_back({"noise", Scope::Input, 0.0, false});
  if (shape) *shape = {g.height, tier};
  return def;
}

std::size_t count_nodes(const TreeDefinition& def) {
  std::vector<const NodeDef*> conditions;
  std::vector<std::string> outputs;
  std::size_t count = 0;
  collect(def.root, conditions, outputs, count);
  return count;
}

Stream generate_samples(const TreeDefinition& def, Mode mode, int count, std::uint64_t seed) {
  Stream stream;
  if (count <= 0) return stream;
  stream.reserve(static_cast<std::size_t>(count));
  std::mt19937_64 rng(seed);
  std::vector<const NodeDef*> conditions;
  std::vector<std::string> outputs;
  std::size_t nodes = 0;
  collect(def.root, conditions, outputs, nodes);

  if (mode == Mode::Sparse || conditions.empty()) {
    // `noise` is declared but read by nothing.
    for (int i = 0; i < count; ++i) stream.push_back(Sample{{"noise", static_cast<double>(i + 1)}});
    return stream;
  }
  std::map<std::string, std::size_t, std::less<>> index;
  for (std::size_t c = 0; c < conditions.size(); ++c) index.emplace(conditions[c]->name, c);
  std::vector<double> primary = initial_primaries(def, conditions);

  // A reference classical run tracks which conditions the latest traversal
  // read; flipping one of them changes a stored evaluation in both engines.
  Tree reference(def);
  std::vector<std::size_t> on_path;
  reference.set_tick_observer([&](NodeId id, TickType, NodeState, NodeState) {
    const Node& n = reference.node(id);
    if (n.kind == NodeKind::Condition) on_path.push_back(index.find(n.name)->second);
  });
  reference.classical_callback({});
  for (int i = 0; i < count; ++i) {
    std::size_t c;
    if (on_path.empty()) {
      c = std::uniform_int_distribution<std::size_t>(0, conditions.size() - 1)(rng);
    } else {
      c = on_path[std::uniform_int_distribution<std::size_t>(0, on_path.size() - 1)(rng)];
    }
    primary[c] = primary[c] > 0.5 ? 0.0 : 1.0;
    Sample s{{conditions[c]->name + "_0", primary[c]}};
    on_path.clear();
    reference.classical_callback(s);
    stream.push_back(std::move(s));
  }
  return stream;
}

Stream generate_unrestricted_dense(const TreeDefinition& def, int count, std::uint64_t seed) {
  Stream stream;
  std::vector<const NodeDef*> conditions;
  std::vector<std::string> outputs;
  std::size_t nodes = 0;
  collect(def.root, conditions, outputs, nodes);
  if (conditions.empty() || count <= 0) return stream;
  std::mt19937_64 rng(seed);
  std::vector<double> primary = initial_primaries(def, conditions);
  for (int i = 0; i < count; ++i) {
    std::size_t c = std::uniform_int_distribution<std::size_t>(0, conditions.size() - 1)(rng);
    primary[c] = primary[c] > 0.5 ? 0.0 : 1.0;
    stream.push_back(Sample{{conditions[c]->name + "_0", primary[c]}});
  }
  return stream;
}

bool path_reads_condition(const TreeDefinition& def) {
  Tree tree(def);
  bool found = false;
  tree.set_tick_observer([&](NodeId id, TickType, NodeState, NodeState) {
    found |= tree.node(id).kind == NodeKind::Condition;
  });
  tree.classical_callback({});
  return found;
}

Transcript run_async(const TreeDefinition& def, const Stream& stream) {
  Tree tree(def);
  Transcript out;
  out.reserve(stream.size() + 1);
  out.push_back(tree.start());
  for (const auto& s : stream) out.push_back(tree.callback(s));
  return out;
}

Transcript run_classical(const TreeDefinition& def, const Stream& stream) {
  Tree tree(def);
  Transcript out;
  out.reserve(stream.size() + 1);
  out.push_back(tree.classical_callback({}));
  for (const auto& s : stream) out.push_back(tree.classical_callback(s));
  return out;
}

std::optional<std::string> compare_transcripts(const Transcript& classical, const Transcript& async) {
  if (classical.size() != async.size()) {
    return "transcript lengths differ: " + std::to_string(classical.size()) + " vs " + std::to_string(async.size());
  }
  for (std::size_t i = 0; i < classical.size(); ++i) {
    const auto& a = classical[i];
    const auto& b = async[i];
    bool equal = a.size() == b.size() &&
                 std::equal(a.begin(), a.end(), b.begin(),
                            [](const auto& x, const auto& y) { return x.first == y.first && same_bits(x.second, y.second); });
    if (!equal) {
      std::string where = i == 0 ? "start" : "sample " + std::to_string(i - 1);
      return where + ": classical " + render(a) + " vs asynchronous " + render(b);
    }
  }
  return std::nullopt;
}

Timing measure_ratio(const TreeDefinition& def, const Stream& stream, int repetitions, bool inject_mismatch) {
  Transcript async = run_async(def, stream);
  if (inject_mismatch) async.front()["injected"] = 1.0;
  if (auto diff = compare_transcripts(run_classical(def, stream), async)) {
    throw Error(ErrorCode::OracleMismatch, *diff);
  }
  Timing t;
  t.t_classical_ns = UINT64_MAX;
  t.t_abtm_ns = UINT64_MAX;
  for (int rep = 0; rep <= repetitions; ++rep) {
    Tree classical(def);
    Tree async(def);
    std::uint64_t tc = time_ns([&] {
      classical.classical_callback({});
      for (const auto& s : stream) classical.classical_callback(s);
    });
    std::uint64_t ta = time_ns([&] {
      async.start();
      for (const auto& s : stream) async.callback(s);
    });
    if (rep == 0) continue;  // warm-up
    t.t_classical_ns = std::min(t.t_classical_ns, tc);
    t.t_abtm_ns = std::min(t.t_abtm_ns, ta);
    t.ticks_classical = classical.tick_count();
    t.ticks_abtm = async.tick_count();
  }
  t.ratio = static_cast<double>(t.t_classical_ns) / static_cast<double>(std::max<std::uint64_t>(t.t_abtm_ns, 1));
  return t;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

TreeDefinition draw_tree(const BenchConfig& cfg, int index, std::uint64_t* seed_out, TreeShape* shape) {
  int tier = cfg.tiers[static_cast<std::size_t>(index) % cfg.tiers.size()];
  std::uint64_t seed = tree_seed(cfg.seed, index);
  TreeDefinition def = generate_random_tree(seed, cfg, tier, shape);
  auto acceptable = [&] {
    if (cfg.target_nodes) {
      auto n = static_cast<double>(count_nodes(def));
      if (n < *cfg.target_nodes * (1.0 - cfg.target_tolerance) || n > *cfg.target_nodes * (1.0 + cfg.target_tolerance)) {
        return false;
      }
    }
    return path_reads_condition(def);
  };
  for (int attempt = 0; !acceptable(); ++attempt) {
    if (attempt > 100000) throw Error(ErrorCode::ConfigError, "no acceptable tree fits the height and children ranges");
    seed = splitmix(seed);
    def = generate_random_tree(seed, cfg, tier, shape);
  }
  if (seed_out) *seed_out = seed;
  return def;
}

std::uint64_t stream_seed(std::uint64_t tree_seed, Mode mode) noexcept {
  return splitmix(tree_seed ^ (mode == Mode::Dense ? 1 : 2));
}

BenchReport run_bench(const BenchConfig& cfg) {
  cfg.check();
  BenchReport report;
  report.config = cfg;
  for (int i = 0; i < cfg.tree_count && !report.mismatch; ++i) {
    int tier = cfg.tiers[static_cast<std::size_t>(i) % cfg.tiers.size()];
    std::uint64_t seed = 0;
    TreeShape shape;
    TreeDefinition def = draw_tree(cfg, i, &seed, &shape);
    for (Mode mode : cfg.modes) {
      Stream stream = generate_samples(def, mode, cfg.samples, stream_seed(seed, mode));
      TreeResult r;
      r.tree_id = i;
      r.nodes = count_nodes(def);
      r.height = shape.height;
      r.mode = mode;
      r.tier = tier;
      try {
        r.timing = measure_ratio(def, stream, cfg.repetitions, cfg.inject_mismatch);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::OracleMismatch) throw;
        report.mismatch = "tree " + std::to_string(i) + " (" + std::string(to_string(mode)) + "): " + e.what();
        break;
      }
      report.results.push_back(r);
    }
  }

  auto add_group = [&](const std::string& name, auto&& keep) {
    std::vector<double> ratios;
    for (const auto& r : report.results) {
      if (keep(r)) ratios.push_back(r.timing.ratio);
    }
    if (ratios.empty()) return;
    Aggregate a;
    a.group = name;
    a.trees = ratios.size();
    a.median = median(ratios);
    a.min = *std::min_element(ratios.begin(), ratios.end());
    a.max = *std::max_element(ratios.begin(), ratios.end());
    report.aggregates.push_back(a);
  };
  for (Mode mode : cfg.modes) {
    add_group(std::string(to_string(mode)), [&](const TreeResult& r) { return r.mode == mode; });
    for (int tier : cfg.tiers) {
      add_group(std::string(to_string(mode)) + "/tier" + std::to_string(tier),
                [&](const TreeResult& r) { return r.mode == mode && r.tier == tier; });
    }
  }
  return report;
}

std::string BenchReport::to_csv() const {
  std::ostringstream out;
  out << "tree_id,nodes,mode,tier,t_classical_ns,t_abtm_ns,R\n";
  char ratio[32];
  for (const auto& r : results) {
    std::snprintf(ratio, sizeof ratio, "%.3f", r.timing.ratio);
    out << r.tree_id << ',' << r.nodes << ',' << to_string(r.mode) << ',' << r.tier << ',' << r.timing.t_classical_ns
        << ',' << r.timing.t_abtm_ns << ',' << ratio << '\n';
  }
  return out.str();
}

std::string BenchReport::aggregate_json(bool include_timings) const {
  using nlohmann::ordered_json;
  ordered_json doc;
  ordered_json gen;
  gen["trees"] = config.tree_count;
  gen["height"] = {config.height.lo, config.height.hi};
  gen["children"] = {config.children.lo, config.children.hi};
  gen["control_kinds"] = {"seq", "sel", "skip"};
  gen["leaf_mix"] = "condition or action, probability 0.5 each";
  gen["condition"] = "S: <own input> > 0.5 [and <own input k> < 0.5 ...]; R: default";
  gen["initial_inputs"] = "all 0, every condition starts at R";
  gen["action"] = "<own output> := 1";
  gen["dense"] = "each sample toggles the primary input of a condition read by the latest classical traversal";
  gen["redraw"] = "trees whose initial activation path reads no condition are redrawn";
  gen["sparse"] = "each sample writes an input no condition reads";
  gen["tiers"] = config.tiers;
  gen["samples_per_tree"] = config.samples;
  gen["seed"] = config.seed;
  if (config.target_nodes) {
    gen["target_nodes"] = *config.target_nodes;
    gen["target_tolerance"] = config.target_tolerance;
  }
  gen["repetitions"] = config.repetitions;
  doc["generator"] = gen;
  doc["equivalence_gate"] = mismatch ? "failed" : "passed";
  if (mismatch) doc["mismatch"] = *mismatch;

  ordered_json trees = ordered_json::array();
  for (const auto& r : results) {
    ordered_json t;
    t["tree_id"] = r.tree_id;
    t["nodes"] = r.nodes;
    t["height"] = r.height;
    t["mode"] = to_string(r.mode);
    t["tier"] = r.tier;
    t["ticks_classical"] = r.timing.ticks_classical;
    t["ticks_abtm"] = r.timing.ticks_abtm;
    trees.push_back(t);
  }
  doc["trees"] = trees;
  if (include_timings) {
    ordered_json aggs = ordered_json::array();
    for (const auto& a : aggregates) {
      aggs.push_back({{"group", a.group}, {"trees", a.trees}, {"median_R", a.median}, {"min_R", a.min}, {"max_R", a.max}});
    }
    doc["ratio"] = aggs;
    doc["reference_range"] = {10, 70};
  }
  return doc.dump(2) + "\n";
}

}  // namespace abtm::bench
