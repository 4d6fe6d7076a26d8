#include "abtm/sync.hpp"

#include <sodium.h>

#include <algorithm>
#include <charconv>
#include <cstring>
#include <set>

#include "abtm/dsl.hpp"
#include "abtm/error.hpp"
#include "abtm/sample_io.hpp"

namespace abtm {

namespace {

constexpr std::string_view kFixedKeys[] = {"trigger_sync", "sync_ended", "send_vars", "received_vars", "master", "time_start"};
constexpr std::string_view kDumpMarker = "__var_dump__";

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string idx(int i) { return std::to_string(i); }
std::string hash_lo(int i) { return "hash_" + idx(i) + "_lo"; }
std::string hash_hi(int i) { return "hash_" + idx(i) + "_hi"; }
std::string hash_set(int i) { return "hash_set_" + idx(i); }

// Skipper latch: once `body` finishes, its result is remembered in
// mem/sub and returned by the first condition from then on.
std::string latch(const std::string& name, const std::string& body, const std::string& indent) {
  const std::string mem = "sync_" + name + "_mem";
  const std::string sub = "sync_" + name + "_sub";
  std::string in = indent + "  ";
  std::string out;
  out += indent + "skip " + name + " {\n";
  out += in + "cond " + name + "_done { S: " + sub + " = 1 and " + mem + " = 1; F: " + sub + " = 2 and " + mem +
         " = 1; R: default; }\n";
  out += in + "sel {\n";
  out += in + "  seq {\n";
  out += body;
  out += in + "    act " + name + "_remember_s { " + mem + " := 1; " + sub + " := 1; }\n";
  out += in + "  }\n";
  out += in + "  act " + name + "_remember_f { " + mem + " := 1; " + sub + " := 2; }\n";
  out += in + "}\n";
  out += indent + "}\n";
  return out;
}

// Master choice. Each alive_i is S only for the lowest alive index and R
// otherwise, under a Skipper. A selector chain with F branches would leave
// skipped conditions at R while their fresh value moves, and the rescan would
// then start those subtrees on its own.
std::string choose_master(int n, const std::string& indent) {
  std::string out = indent + "skip first_alive {\n";
  std::string lower;
  for (int i = 1; i < n; ++i) {
    out += indent + "  seq {\n";
    out += indent + "    cond alive_" + idx(i) + " { S: sync_choose = 1 and " + hash_set(i) + " = 1" + lower +
           "; R: default; }\n";
    out += indent + "    act master_" + idx(i) + " { master := " + idx(i) + "; }\n";
    out += indent + "  }\n";
    lower += " and " + hash_set(i) + " = 0";
  }
  out += indent + "  act master_" + idx(n) + " { master := " + idx(n) + "; }\n";
  out += indent + "}\n";
  return out;
}

void collect_keys(const NodeDef& n, std::set<std::string>& keys) {
  if (n.kind == NodeKind::Condition) {
    for (const auto& k : n.condition.deps()) keys.insert(k);
  } else if (n.kind == NodeKind::Action) {
    for (const auto& a : n.action.assignments) {
      keys.insert(a.target);
      for (const auto& k : a.value.deps()) keys.insert(k);
    }
  }
  for (const auto& c : n.children) collect_keys(c, keys);
}

}  // namespace

void SyncConfig::check() const {
  if (n < 2) throw Error(ErrorCode::ConfigError, "replica count must be at least 2");
  if (me < 1 || me > n) throw Error(ErrorCode::ConfigError, "replica index must be in 1.." + idx(n));
  if (!(max_delay > 0.0)) throw Error(ErrorCode::ConfigError, "max_delay must be positive");
}

bool is_sync_key(std::string_view key) noexcept {
  for (auto k : kFixedKeys) {
    if (key == k) return true;
  }
  if (key.starts_with("hash_set_")) return all_digits(key.substr(9));
  if (!key.starts_with("hash_")) return false;
  key.remove_prefix(5);
  if (key.ends_with("_lo") || key.ends_with("_hi")) key.remove_suffix(3);
  return all_digits(key);
}

bool is_sync_sample(const Sample& sample) noexcept {
  return std::any_of(sample.begin(), sample.end(), [](const auto& kv) { return is_sync_key(kv.first); });
}

void check_mission_keys(const TreeDefinition& mission) {
  std::set<std::string> keys;
  for (const auto& d : mission.declarations) keys.insert(d.key);
  collect_keys(mission.root, keys);
  for (const auto& k : keys) {
    if (is_sync_key(k)) throw Error(ErrorCode::ReservedKey, "mission uses reserved sync key '" + k + "'");
  }
}

std::string sync_tree_text(const SyncConfig& cfg) {
  cfg.check();
  const int me = cfg.me;
  const int n = cfg.n;
  std::string t;
  t += "// synchronization tree of replica " + idx(me) + " of " + idx(n) + "\n";
  t += "input trigger_sync;\ninput received_vars;\ninput mission_hash_lo;\ninput mission_hash_hi;\n";
  t += "input max_delay = " + format_number(cfg.max_delay) + ";\n";
  for (int i = 1; i <= n; ++i) {
    const char* scope = i == me ? "output" : "input";
    t += std::string(scope) + " " + hash_lo(i) + ";\n";
    t += std::string(scope) + " " + hash_hi(i) + ";\n";
    t += std::string(scope) + " " + hash_set(i) + ";\n";
  }
  t += "output master;\noutput send_vars;\noutput sync_ended;\n";
  t += "local time;\nlocal time_start;\nlocal sync_choose;\nlocal sync_compare;\n";
  for (const char* l : {"send", "wait"}) {
    t += "local sync_" + std::string(l) + "_mem;\nlocal sync_" + std::string(l) + "_sub;\n";
  }

  t += "seq sync_tree {\n";

  // 1. start condition
  t += "  cond start_sync { S: trigger_sync = 1";
  for (int i = 1; i <= n; ++i) t += " or " + hash_set(i) + " = 1";
  t += "; R: default; }\n";

  // 2. latched hash broadcast
  t += latch("send",
             "      act send_hash { " + hash_lo(me) + " := mission_hash_lo; " + hash_hi(me) + " := mission_hash_hi; " +
                 hash_set(me) + " := 1; time_start := time; }\n",
             "  ");

  // 3. wait for hashes or time out, then choose the master
  t += "  seq wait_and_choose {\n";
  std::string wait_body;
  wait_body += "      skip hashes_or_timeout {\n";
  wait_body += "        seq all_hashes_received {\n";
  for (int i = 1; i <= n; ++i) {
    wait_body += "          cond received_" + idx(i) + " { S: " + hash_set(i) + " = 1; R: default; }\n";
  }
  wait_body += "        }\n";
  wait_body += "        cond timeout { S: " + hash_set(me) + " = 1 and time - time_start > max_delay; R: default; }\n";
  wait_body += "      }\n";
  t += latch("wait", wait_body, "    ");
  // Gates open only on top-down activation, so the gated conditions below
  // are first evaluated in place and cannot start their subtrees early.
  t += "    seq choose_master {\n";
  t += "      act open_choose { sync_choose := 1; }\n";
  t += choose_master(n, "      ");
  t += "    }\n";
  t += "  }\n";

  // 4. compare hashes; the master pushes its variables, slaves wait for them
  std::string same = "1";
  for (int i = 1; i <= n; ++i) {
    for (int j = i + 1; j <= n; ++j) {
      same += " and (" + hash_set(i) + " = 0 or " + hash_set(j) + " = 0 or (" + hash_lo(i) + " = " + hash_lo(j) +
              " and " + hash_hi(i) + " = " + hash_hi(j) + "))";
    }
  }
  // Push/wait conditions are also gated on "hashes differ" so that they stay
  // R when same_hash short-circuits the selector.
  const std::string differ = "sync_compare = 1 and not (" + same + ")";
  t += "  seq compare_hashes {\n";
  t += "    act open_compare { sync_compare := 1; }\n";
  t += "    sel compare {\n";
  t += "      cond same_hash { S: sync_compare = 1 and " + same + "; F: sync_compare = 1; R: default; }\n";
  t += "      sel push_or_wait {\n";
  t += "        seq {\n";
  t += "          cond i_am_master { S: " + differ + " and master = " + idx(me) + "; F: " + differ + "; R: default; }\n";
  t += "          act push_vars { send_vars := 1; }\n";
  t += "        }\n";
  t += "        cond vars_received { S: " + differ + " and received_vars = 1; R: default; }\n";
  t += "      }\n";
  t += "    }\n";
  t += "  }\n";

  // 5. finish; the executor then restores the whole tree to its initial state
  t += "  act finish { trigger_sync := 0; sync_ended := 1; }\n";
  t += "}\n";
  return t;
}

TreeDefinition build_sync_tree(const SyncConfig& cfg) { return parse_tree(sync_tree_text(cfg)); }

HashHalves split_hash(std::uint64_t h) noexcept {
  return {static_cast<double>(h & 0xffffffffULL), static_cast<double>(h >> 32)};
}

std::uint64_t join_hash(double lo, double hi) noexcept {
  return (static_cast<std::uint64_t>(hi) << 32) | static_cast<std::uint64_t>(lo);
}

std::string base64_encode(std::string_view bytes) {
  if (sodium_init() < 0) throw Error(ErrorCode::InvalidArgument, "libsodium failed to initialize");
  const int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_ENCODED_LEN(bytes.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), variant);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (sodium_init() < 0) throw Error(ErrorCode::InvalidArgument, "libsodium failed to initialize");
  std::string out(text.size() / 4 * 3 + 3, '\0');
  std::size_t len = 0;
  const char* end = nullptr;
  int rc = sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(), text.size(), nullptr,
                             &len, &end, sodium_base64_VARIANT_ORIGINAL);
  if (rc != 0 || end != text.data() + text.size()) throw Error(ErrorCode::MalformedDump, "invalid base64 in variable dump");
  out.resize(len);
  return out;
}

std::string encode_message(const SyncMessage& message) {
  if (message.kind == SyncMessage::Kind::Hash) return sample_to_json(message.fields);
  return "{\"" + std::string(kDumpMarker) + "\":1}\n" + base64_encode(message.dump);
}

SyncMessage decode_message(std::string_view text) {
  SyncMessage m;
  auto nl = text.find('\n');
  Sample head = sample_from_json(text.substr(0, nl));
  if (head.contains(kDumpMarker)) {
    if (nl == std::string_view::npos) throw Error(ErrorCode::MalformedDump, "variable dump frame without payload");
    m.kind = SyncMessage::Kind::VarDump;
    m.dump = base64_decode(text.substr(nl + 1));
    return m;
  }
  if (nl != std::string_view::npos) throw Error(ErrorCode::MalformedDump, "trailing data after hash message");
  m.fields = std::move(head);
  return m;
}

Executor::Executor(const TreeDefinition& mission, const SyncConfig& cfg) : cfg_(cfg) {
  cfg_.check();
  check_mission_keys(mission);
  sync_def_ = build_sync_tree(cfg_);
  mission_ = std::make_unique<Tree>(build(mission));
  sync_ = std::make_unique<Tree>(sync_def_);
  key_hash_set_ = hash_set(cfg_.me);
  key_hash_lo_ = hash_lo(cfg_.me);
  key_hash_hi_ = hash_hi(cfg_.me);
}

Executor::~Executor() = default;
Executor::Executor(Executor&&) noexcept = default;
Executor& Executor::operator=(Executor&&) noexcept = default;

Sample Executor::start() {
  round_finished_ = false;
  sync_->start();
  return mission_->start();
}

Sample Executor::callback(const Sample& sample) {
  round_finished_ = false;
  if (is_sync_sample(sample)) return run_sync(sample);
  mission_->memory().apply(sample);
  Sample out;
  if (auto t = sample.find(kTimeKey); t != sample.end()) {
    out = run_sync(Sample{{std::string(kTimeKey), t->second}});
  }
  // A change arriving mid-round waits for the post-round mission callback.
  if (!in_round_ && !round_finished_ && mission_->has_changed_conditions()) {
    Sample res = run_sync(Sample{{"trigger_sync", 1.0}});
    out.insert(res.begin(), res.end());
  }
  return out;
}

Sample Executor::run_sync(const Sample& sample) {
  Sample in = sample;
  if (!in_round_) {
    HashHalves h = split_hash(mission_->memory().hash());
    in["mission_hash_lo"] = h.lo;
    in["mission_hash_hi"] = h.hi;
  }
  Sample res = sync_->callback(in);

  if (auto hs = res.find(key_hash_set_); hs != res.end() && hs->second == 1.0) {
    in_round_ = true;
    SyncMessage m;
    m.fields[key_hash_lo_] = sync_->memory().get(key_hash_lo_);
    m.fields[key_hash_hi_] = sync_->memory().get(key_hash_hi_);
    m.fields[key_hash_set_] = 1.0;
    outbox_.push_back(std::move(m));
  }
  if (auto sv = res.find("send_vars"); sv != res.end() && sv->second == 1.0) {
    // Taken before the mission callback: slaves adopt the same pre-callback
    // state and then process the same pending changes.
    SyncMessage m;
    m.kind = SyncMessage::Kind::VarDump;
    m.dump = make_var_dump();
    outbox_.push_back(std::move(m));
  }
  if (res.contains("sync_ended")) {
    last_master_ = static_cast<int>(sync_->memory().get("master"));
    ++rounds_;
    in_round_ = false;
    round_finished_ = true;
    reset_sync_tree();
    Sample mission_out = mission_->callback({});
    res.insert(mission_out.begin(), mission_out.end());
  }
  return res;
}

void Executor::reset_sync_tree() {
  double time = sync_->memory().get(kTimeKey);
  auto fresh = std::make_unique<Tree>(sync_def_);
  fresh->memory().apply(Sample{{std::string(kTimeKey), time}});
  fresh->memory().clear_dirty();
  fresh->start();
  sync_ = std::move(fresh);
}

std::string Executor::make_var_dump() const { return mission_->memory().canonical_snapshot(); }

Sample Executor::apply_var_dump(std::string_view dump) {
  round_finished_ = false;
  if (!in_round_) {
    // Stale: this replica already finished the round. Adopting a
    // pre-callback state now would roll its mission back.
    if (!parse_snapshot(dump)) throw Error(ErrorCode::MalformedDump, "variable dump does not parse");
    return {};
  }
  mission_->memory().adopt_snapshot(dump);
  return run_sync(Sample{{"received_vars", 1.0}});
}

std::vector<SyncMessage> Executor::take_outbox() {
  std::vector<SyncMessage> out;
  out.swap(outbox_);
  return out;
}

bool check_consistency(const std::vector<const Executor*>& alive) {
  for (std::size_t i = 1; i < alive.size(); ++i) {
    if (alive[i]->mission_hash() != alive[0]->mission_hash()) return false;
  }
  return true;
}

}  // namespace abtm
