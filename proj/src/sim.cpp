#include "abtm/sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <queue>
#include <random>
#include <sstream>
#include <tuple>
#include <variant>

#include "abtm/dsl.hpp"
#include "abtm/error.hpp"
#include "abtm/expr.hpp"
#include "abtm/sync.hpp"

namespace abtm::sim {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr int kEnv = 0;
constexpr int kAny = -1;

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

struct LinkSpec {
  int from = kAny;
  int to = kAny;
};

int parse_end(std::string_view s, bool allow_env, const std::string& link) {
  if (s == "*") return kAny;
  if (s == "env") {
    if (!allow_env) bad("link '" + link + "': env cannot be a receiver");
    return kEnv;
  }
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9' || v > 1000000) bad("link '" + link + "': bad endpoint");
    v = v * 10 + (c - '0');
  }
  if (s.empty() || v < 1) bad("link '" + link + "': bad endpoint");
  return v;
}

LinkSpec parse_link(const std::string& link) {
  auto arrow = link.find("->");
  if (arrow == std::string::npos) bad("link '" + link + "': expected <from>-><to>");
  return {parse_end(std::string_view(link).substr(0, arrow), true, link),
          parse_end(std::string_view(link).substr(arrow + 2), false, link)};
}

// Keys of a json object that are not in `allowed`.
void only_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) bad(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == k;
    if (!ok) bad(where + ": unknown field '" + k + "'");
  }
}

double num(const json& j, const std::string& where) {
  if (!j.is_number()) bad(where + ": expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) bad(where + ": expected an integer");
  return j.get<int>();
}

Sample to_sample(const json& j, const std::string& where) {
  if (!j.is_object()) bad(where + ": expected an object of numbers");
  Sample s;
  for (const auto& [k, v] : j.items()) s[k] = num(v, where + "." + k);
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

Sample mission_part(const Sample& out) {
  Sample s;
  for (const auto& [k, v] : out) {
    if (!is_sync_key(k)) s.emplace(k, v);
  }
  return s;
}

ordered_json sample_json(const Sample& s) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : s) j[k] = v;
  return j;
}

// --- event loop -------------------------------------------------------------

struct Emit {
  std::vector<int> targets;
  Sample sample;
};
struct Deliver {
  int from = kEnv;
  int to = 0;
  bool is_sample = true;  // environment sample; otherwise a sync message
  Sample sample;
  SyncMessage message;
};
struct CrashAt {
  int replica = 0;
};
using Payload = std::variant<Emit, Deliver, CrashAt>;

struct Key {
  double time;
  std::uint64_t seq;
  int replica;
  bool operator>(const Key& o) const { return std::tie(time, seq, replica) > std::tie(o.time, o.seq, o.replica); }
};

class Simulation {
 public:
  explicit Simulation(const ScenarioConfig& cfg) : cfg_(cfg) {
    cfg_.check();
    TreeDefinition mission = parse_tree(cfg_.tree_text);
    for (int i = 1; i <= cfg_.replicas; ++i) ex_.emplace_back(mission, SyncConfig{i, cfg_.replicas, cfg_.max_delay});
    alive_.assign(static_cast<std::size_t>(cfg_.replicas), true);
    for (const auto& f : cfg_.faults) links_.push_back(parse_link(f.link));
    fault_hits_.assign(cfg_.faults.size(), 0);

    report_.replica_count = cfg_.replicas;
    report_.duration = cfg_.duration;
    report_.seed = cfg_.seed;
    report_.replicas.resize(static_cast<std::size_t>(cfg_.replicas));
    for (int i = 1; i <= cfg_.replicas; ++i) report_.replicas[idx(i)].index = i;
    report_.masters.push_back({0.0, 0, 1});

    // Crashes first so they win ties with samples at the same instant.
    std::mt19937_64 rng(cfg_.seed);
    for (const auto& c : cfg_.crashes) {
      double t;
      if (c.time) {
        t = *c.time;
      } else {
        double hi = c.window_hi > 0.0 ? c.window_hi : cfg_.duration;
        double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        t = c.window_lo + u * (hi - c.window_lo);
      }
      push(t, 0, CrashAt{c.replica});
    }
    std::vector<std::pair<double, Emit>> emits;
    for (double t : inject_time(cfg_.duration, cfg_.time_tick)) {
      emits.push_back({t, Emit{{}, Sample{{std::string(kTimeKey), t}}}});
    }
    for (const auto& e : cfg_.schedule) emits.push_back({e.time, Emit{e.targets, e.sample}});
    std::stable_sort(emits.begin(), emits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [t, e] : emits) push(t, 0, std::move(e));
  }

  SimReport run() {
    now_ = 0.0;
    for (int r = 1; r <= cfg_.replicas; ++r) {
      guarded(r, [&] { handle(r, ex(r).start()); });
    }
    while (!queue_.empty()) {
      Key k = queue_.top();
      queue_.pop();
      Payload p = std::move(payloads_.at(k.seq));
      payloads_.erase(k.seq);
      now_ = k.time;
      if (auto* e = std::get_if<Emit>(&p)) {
        emit(*e);
      } else if (auto* d = std::get_if<Deliver>(&p)) {
        deliver(*d);
      } else {
        crash(std::get<CrashAt>(p).replica);
      }
    }
    finish();
    return std::move(report_);
  }

 private:
  static std::size_t idx(int r) { return static_cast<std::size_t>(r - 1); }
  Executor& ex(int r) { return ex_[idx(r)]; }

  void push(double t, int replica, Payload p) {
    std::uint64_t s = seq_++;
    payloads_.emplace(s, std::move(p));
    queue_.push(Key{t, s, replica});
  }

  template <class F>
  void guarded(int r, F&& f) {
    try {
      f();
    } catch (const Error& e) {
      throw Error(e.code(), "replica " + std::to_string(r) + " at t=" + format_number(now_) + ": " + e.what());
    }
  }

  // Applies the first matching fault rule, then keeps the link FIFO.
  void send(int from, int to, std::vector<std::string_view> keys, Deliver d) {
    double delay = 0.0;
    for (std::size_t i = 0; i < cfg_.faults.size(); ++i) {
      const Fault& f = cfg_.faults[i];
      const LinkSpec& l = links_[i];
      if (l.from != kAny && l.from != from) continue;
      if (l.to != kAny && l.to != to) continue;
      if (now_ < f.after) continue;
      if (f.count && fault_hits_[i] >= *f.count) continue;
      bool hit = f.match.empty();
      for (const auto& m : f.match) {
        for (auto k : keys) hit = hit || k == m;
      }
      if (!hit) continue;
      ++fault_hits_[i];
      if (f.drop) {
        ++report_.counts.dropped;
        return;
      }
      ++report_.counts.delayed;
      delay = f.delay;
      break;
    }
    double& last = link_clock_[{from, to}];
    double t = std::max(now_ + delay, last);
    last = t;
    push(t, to, std::move(d));
  }

  void emit(const Emit& e) {
    ++report_.counts.samples_emitted;
    std::vector<std::string_view> keys;
    for (const auto& [k, v] : e.sample) keys.push_back(k);
    auto to_one = [&](int r) {
      Deliver d;
      d.from = kEnv;
      d.to = r;
      d.sample = e.sample;
      send(kEnv, r, keys, std::move(d));
    };
    if (e.targets.empty()) {
      for (int r = 1; r <= cfg_.replicas; ++r) to_one(r);
    } else {
      for (int r : e.targets) to_one(r);
    }
  }

  void deliver(const Deliver& d) {
    if (!alive_[idx(d.to)]) return;
    guarded(d.to, [&] {
      Executor& e = ex(d.to);
      Sample out;
      if (d.is_sample) {
        ++report_.counts.samples_delivered;
        ++report_.replicas[idx(d.to)].samples;
        out = e.callback(d.sample);
      } else if (d.message.kind == SyncMessage::Kind::Hash) {
        out = e.callback(d.message.fields);
      } else {
        out = e.apply_var_dump(d.message.dump);
      }
      handle(d.to, out);
    });
  }

  void handle(int r, const Sample& out) {
    Executor& e = ex(r);
    ReplicaReport& rep = report_.replicas[idx(r)];
    if (e.round_finished()) {
      std::uint64_t round = e.rounds_completed();
      rep.rounds = round;
      report_.rounds[round].push_back({r, now_, e.mission_hash(), e.last_master()});
      if (e.last_master() != report_.masters.back().master) {
        report_.masters.push_back({now_, round, e.last_master()});
      }
    }
    Sample part = mission_part(out);
    if (!part.empty()) {
      Output o{now_, r, std::move(part), r == e.last_master()};
      if (o.external) {
        ++report_.counts.external_outputs;
        report_.external.push_back(o);
      } else {
        ++report_.counts.suppressed_outputs;
      }
      rep.outputs.push_back(std::move(o));
    }
    for (auto& m : e.take_outbox()) {
      std::vector<std::string_view> keys;
      if (m.kind == SyncMessage::Kind::Hash) {
        ++report_.counts.hash_messages;
        for (const auto& [k, v] : m.fields) keys.push_back(k);
      } else {
        ++report_.counts.var_dumps;
        keys.push_back("__var_dump__");
      }
      for (int to = 1; to <= cfg_.replicas; ++to) {
        if (to == r) continue;
        Deliver d;
        d.from = r;
        d.to = to;
        d.is_sample = false;
        d.message = m;
        send(r, to, keys, std::move(d));
      }
    }
  }

  void crash(int replica) {
    int r = replica == 0 ? report_.masters.back().master : replica;
    if (!alive_[idx(r)]) return;
    alive_[idx(r)] = false;
    report_.replicas[idx(r)].crashed_at = now_;
  }

  void finish() {
    for (const auto& [round, recs] : report_.rounds) {
      for (std::size_t i = 1; i < recs.size(); ++i) {
        if (recs[i].hash != recs[0].hash) {
          report_.mismatches.push_back("round " + std::to_string(round) + ": replica " + std::to_string(recs[0].replica) +
                                       " " + hex(recs[0].hash) + " vs replica " + std::to_string(recs[i].replica) + " " +
                                       hex(recs[i].hash));
        }
      }
    }
    report_.verdict = report_.mismatches.empty();
    report_.counts.sync_rounds = report_.rounds.size();
  }

  ScenarioConfig cfg_;
  std::vector<Executor> ex_;
  std::vector<bool> alive_;
  std::vector<LinkSpec> links_;
  std::vector<std::uint64_t> fault_hits_;
  std::map<std::pair<int, int>, double> link_clock_;
  std::priority_queue<Key, std::vector<Key>, std::greater<>> queue_;
  std::map<std::uint64_t, Payload> payloads_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  SimReport report_;
};

}  // namespace

void ScenarioConfig::check() const {
  if (replicas < 2) bad("replicas must be at least 2");
  if (!(max_delay > 0.0)) bad("max_delay must be positive");
  if (!(duration >= 0.0) || !std::isfinite(duration)) bad("duration must be a non-negative number");
  if (!(time_tick > 0.0)) bad("time_tick must be positive");
  for (const auto& e : schedule) {
    if (!(e.time >= 0.0 && e.time <= duration)) bad("schedule event at " + format_number(e.time) + " is outside [0, duration]");
    for (int t : e.targets) {
      if (t < 1 || t > replicas) bad("schedule target " + std::to_string(t) + " is not a replica");
    }
  }
  for (const auto& f : faults) {
    LinkSpec l = parse_link(f.link);
    if (l.from > replicas || l.to > replicas) bad("link '" + f.link + "' names an unknown replica");
    if (f.drop == (f.delay > 0.0)) bad("fault on '" + f.link + "' needs exactly one of drop or a positive delay");
    if (f.delay < 0.0) bad("fault delay must be non-negative");
  }
  for (const auto& c : crashes) {
    if (c.replica < 0 || c.replica > replicas) bad("crash names an unknown replica");
    if (c.time && !(*c.time >= 0.0 && *c.time <= duration)) bad("crash time is outside [0, duration]");
    double hi = c.window_hi > 0.0 ? c.window_hi : duration;
    if (!c.time && !(c.window_lo >= 0.0 && c.window_lo < hi && hi <= duration)) bad("crash window is empty or outside [0, duration]");
  }
}

ScenarioConfig ScenarioConfig::reference() const {
  ScenarioConfig c = *this;
  c.faults.clear();
  c.crashes.clear();
  return c;
}

ScenarioConfig parse_scenario(const std::string& json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SyntaxError(e.byte, std::string("scenario: ") + e.what());
  }
  only_keys(j, {"replicas", "tree", "tree_text", "max_delay", "duration", "time_tick", "seed", "schedule", "faults", "crashes"},
            "scenario");
  ScenarioConfig c;
  if (j.contains("replicas")) c.replicas = integer(j["replicas"], "replicas");
  if (j.contains("max_delay")) c.max_delay = num(j["max_delay"], "max_delay");
  if (j.contains("duration")) c.duration = num(j["duration"], "duration");
  if (j.contains("time_tick")) c.time_tick = num(j["time_tick"], "time_tick");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)) {
      bad("seed: expected a non-negative integer");
    }
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("tree") == j.contains("tree_text")) bad("scenario needs exactly one of tree or tree_text");
  if (j.contains("tree")) {
    if (!j["tree"].is_string()) bad("tree: expected a path");
    c.tree_path = j["tree"].get<std::string>();
    std::filesystem::path p(c.tree_path);
    if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
    c.tree_text = read_file(p.string());
  } else {
    if (!j["tree_text"].is_string()) bad("tree_text: expected a string");
    c.tree_text = j["tree_text"].get<std::string>();
  }

  if (j.contains("schedule")) {
    if (!j["schedule"].is_array()) bad("schedule: expected an array");
    for (const auto& e : j["schedule"]) {
      only_keys(e, {"time", "target", "sample"}, "schedule event");
      Event ev;
      ev.time = num(e.value("time", json()), "schedule.time");
      if (e.contains("target")) {
        const json& t = e["target"];
        if (t.is_string() && t.get<std::string>() == "all") {
        } else if (t.is_number_integer()) {
          ev.targets.push_back(t.get<int>());
        } else if (t.is_array()) {
          for (const auto& x : t) ev.targets.push_back(integer(x, "schedule.target"));
          if (ev.targets.empty()) bad("schedule.target: empty replica list");
        } else {
          bad("schedule.target: expected \"all\", a replica index or a list");
        }
      }
      if (!e.contains("sample")) bad("schedule event without sample");
      ev.sample = to_sample(e["sample"], "schedule.sample");
      c.schedule.push_back(std::move(ev));
    }
  }
  if (j.contains("faults")) {
    if (!j["faults"].is_array()) bad("faults: expected an array");
    for (const auto& f : j["faults"]) {
      only_keys(f, {"link", "match", "after", "count", "drop", "delay"}, "fault");
      Fault x;
      if (f.contains("link")) {
        if (!f["link"].is_string()) bad("fault.link: expected a string");
        x.link = f["link"].get<std::string>();
      }
      if (f.contains("match")) {
        if (!f["match"].is_array()) bad("fault.match: expected a list of keys");
        for (const auto& k : f["match"]) {
          if (!k.is_string()) bad("fault.match: expected a list of keys");
          x.match.push_back(k.get<std::string>());
        }
      }
      if (f.contains("after")) x.after = num(f["after"], "fault.after");
      if (f.contains("count")) {
        int n = integer(f["count"], "fault.count");
        if (n < 1) bad("fault.count must be positive");
        x.count = static_cast<std::uint64_t>(n);
      }
      if (f.contains("drop")) {
        if (!f["drop"].is_boolean()) bad("fault.drop: expected true or false");
        x.drop = f["drop"].get<bool>();
      }
      if (f.contains("delay")) x.delay = num(f["delay"], "fault.delay");
      c.faults.push_back(std::move(x));
    }
  }
  if (j.contains("crashes")) {
    if (!j["crashes"].is_array()) bad("crashes: expected an array");
    for (const auto& k : j["crashes"]) {
      only_keys(k, {"replica", "time", "window"}, "crash");
      Crash x;
      const json& r = k.value("replica", json("master"));
      if (r.is_string() && r.get<std::string>() == "master") {
        x.replica = 0;
      } else {
        x.replica = integer(r, "crash.replica");
        if (x.replica < 1) bad("crash.replica must be an index or \"master\"");
      }
      const json& t = k.value("time", json("random"));
      if (!(t.is_string() && t.get<std::string>() == "random")) x.time = num(t, "crash.time");
      if (k.contains("window")) {
        const json& w = k["window"];
        if (!w.is_array() || w.size() != 2) bad("crash.window: expected [lo, hi]");
        x.window_lo = num(w[0], "crash.window");
        x.window_hi = num(w[1], "crash.window");
      }
      c.crashes.push_back(x);
    }
  }
  c.check();
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::string text = read_file(path);
  return parse_scenario(text, std::filesystem::path(path).parent_path().string());
}

std::vector<double> inject_time(double duration, double tick) {
  if (!(tick > 0.0)) bad("time_tick must be positive");
  if (!(duration >= 0.0)) bad("duration must be non-negative");
  // The epsilon keeps the last stamp when duration is a decimal multiple.
  auto last = static_cast<std::uint64_t>(std::floor(duration / tick + 1e-9));
  std::vector<double> out;
  out.reserve(last + 1);
  for (std::uint64_t k = 0; k <= last; ++k) out.push_back(static_cast<double>(k) * tick);
  return out;
}

SimReport run_scenario(const ScenarioConfig& cfg) { return Simulation(cfg).run(); }

std::string SimReport::to_json() const {
  ordered_json j;
  j["verdict"] = verdict;
  j["replicas"] = replica_count;
  j["duration"] = duration;
  j["seed"] = seed;
  ordered_json c;
  c["samples_emitted"] = counts.samples_emitted;
  c["baseline_sync_calls"] = counts.samples_emitted;
  c["samples_delivered"] = counts.samples_delivered;
  c["sync_rounds"] = counts.sync_rounds;
  c["external_outputs"] = counts.external_outputs;
  c["suppressed_outputs"] = counts.suppressed_outputs;
  c["hash_messages"] = counts.hash_messages;
  c["var_dumps"] = counts.var_dumps;
  c["dropped"] = counts.dropped;
  c["delayed"] = counts.delayed;
  j["counts"] = c;
  j["mismatches"] = mismatches;
  ordered_json m = ordered_json::array();
  for (const auto& x : masters) m.push_back({{"time", x.time}, {"round", x.round}, {"master", x.master}});
  j["masters"] = m;
  ordered_json r = ordered_json::array();
  for (const auto& [round, recs] : rounds) {
    ordered_json rr = ordered_json::array();
    for (const auto& x : recs) {
      rr.push_back({{"replica", x.replica}, {"time", x.time}, {"hash", hex(x.hash)}, {"master", x.master}});
    }
    r.push_back({{"round", round}, {"replicas", rr}});
  }
  j["rounds"] = r;
  ordered_json ext = ordered_json::array();
  for (const auto& o : external) ext.push_back({{"time", o.time}, {"replica", o.replica}, {"sample", sample_json(o.sample)}});
  j["external"] = ext;
  ordered_json reps = ordered_json::array();
  for (const auto& rep : replicas) {
    ordered_json x;
    x["index"] = rep.index;
    x["crashed_at"] = rep.crashed_at ? ordered_json(*rep.crashed_at) : ordered_json();
    x["samples"] = rep.samples;
    x["rounds"] = rep.rounds;
    ordered_json outs = ordered_json::array();
    for (const auto& o : rep.outputs) {
      outs.push_back({{"time", o.time}, {"sample", sample_json(o.sample)}, {"suppressed", !o.external}});
    }
    x["outputs"] = outs;
    reps.push_back(x);
  }
  j["transcripts"] = reps;
  return j.dump(1) + "\n";
}

std::string SimReport::to_text() const {
  std::ostringstream o;
  o << "replicas " << replica_count << ", duration " << format_number(duration) << " s, seed " << seed << "\n";
  o << "samples: " << counts.samples_emitted << " emitted, " << counts.samples_delivered << " delivered\n";
  o << "sync rounds: " << counts.sync_rounds << " (per-sample baseline " << counts.samples_emitted;
  if (counts.sync_rounds > 0) {
    o << ", reduction " << format_number(static_cast<double>(counts.samples_emitted) / static_cast<double>(counts.sync_rounds)) << "x";
  }
  o << ")\n";
  o << "outputs: " << counts.external_outputs << " external, " << counts.suppressed_outputs << " suppressed\n";
  o << "messages: " << counts.hash_messages << " hash, " << counts.var_dumps << " dumps; faults: " << counts.dropped
    << " dropped, " << counts.delayed << " delayed\n";
  for (const auto& m : masters) {
    o << "master " << m.master << " from t=" << format_number(m.time);
    if (m.round > 0) o << " (round " << m.round << ")";
    o << "\n";
  }
  for (const auto& r : replicas) {
    if (r.crashed_at) o << "replica " << r.index << " crashed at t=" << format_number(*r.crashed_at) << "\n";
  }
  for (const auto& m : mismatches) o << "mismatch " << m << "\n";
  o << "verdict: " << (verdict ? "consistent" : "INCONSISTENT") << "\n";
  return o.str();
}

}  // namespace abtm::sim
