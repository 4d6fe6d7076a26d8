#include <doctest.h>

#include <random>
#include <set>

#include "abtm/error.hpp"
#include "abtm/memory.hpp"

using namespace abtm;

namespace {

// FNV-1a values computed offline with an independent implementation.
constexpr std::uint64_t kFnvEmpty = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvX1 = 0xc48b7fa8a3c518d2ULL;        // "x=3ff0000000000000;"
constexpr std::uint64_t kFnvA1 = 0x25b0c4690eac2a5dULL;        // "a=3ff0000000000000;"
constexpr std::uint64_t kFnvA1Xm25 = 0x37ad4d7aad5a2d16ULL;    // "a=3ff...;x=c004000000000000;"

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("declare makes a variable readable and rejects duplicates") {
  Memory m;
  m.declare("x", Scope::Input, 0.0, false);
  CHECK(m.contains("x"));
  CHECK(m.get("x") == 0.0);
  CHECK(m.dirty_keys().empty());
  CHECK(m.pending_output_changes().empty());

  try {
    m.declare("x", Scope::Input, 0.0, false);
    FAIL("expected DuplicateKey");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateKey);
  }
  try {
    m.declare("__state__/0", Scope::Input, 0.0, false);
    FAIL("expected ReservedKey");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ReservedKey);
  }
}

TEST_CASE("set reports exactly the changed keys") {
  Memory m;
  m.declare("x", Scope::Input);
  m.declare("y", Scope::Input);
  CHECK(as_set(m.set({{"x", 1.0}})) == std::set<std::string>{"x"});
  CHECK(m.is_dirty(*m.find("x")));

  CHECK(m.set({{"x", 1.0}}).empty());

  Memory n;
  n.declare("x", Scope::Input);
  n.declare("y", Scope::Input);
  CHECK(as_set(n.set({{"x", 1.0}, {"y", 0.0}})) == std::set<std::string>{"x"});
}

TEST_CASE("get reads current values and auto-declares as Input 0") {
  Memory m;
  m.set({{"x", 1.0}});
  CHECK(m.get("x") == 1.0);
  CHECK(m.get("z") == 0.0);
  CHECK(m.contains("z"));
  CHECK(m.variable(*m.find("z")).scope == Scope::Input);
  m.set({{"x", -2.5}});
  CHECK(m.get("x") == -2.5);
}

TEST_CASE("time is auto-declared local") {
  Memory m;
  m.set({{"time", 3.0}});
  CHECK(m.variable(*m.find("time")).local);
  CHECK(m.canonical_snapshot().empty());
}

TEST_CASE("drain_output_changes returns Output changes once, last write wins") {
  Memory m;
  m.declare("land", Scope::Output);
  m.declare("x", Scope::Input);
  m.set({{"land", 1.0}});
  CHECK(m.drain_output_changes() == Sample{{"land", 1.0}});
  CHECK(m.drain_output_changes().empty());

  m.set({{"x", 1.0}});
  CHECK(m.drain_output_changes().empty());

  m.set({{"land", 2.0}});
  m.set({{"land", 3.0}});
  CHECK(m.drain_output_changes() == Sample{{"land", 3.0}});
}

TEST_CASE("drain agrees with a naive log-then-compact oracle") {
  std::mt19937_64 rng(7);
  Memory m;
  const std::vector<std::string> keys{"o1", "o2", "o3", "i1"};
  for (const auto& k : keys) m.declare(k, k[0] == 'o' ? Scope::Output : Scope::Input);
  std::map<std::string, double> current{{"o1", 0}, {"o2", 0}, {"o3", 0}, {"i1", 0}};
  for (int round = 0; round < 200; ++round) {
    std::vector<std::pair<std::string, double>> log;
    int writes = static_cast<int>(rng() % 5);
    for (int w = 0; w < writes; ++w) {
      const std::string& k = keys[rng() % keys.size()];
      double v = static_cast<double>(rng() % 3);
      m.set({{k, v}});
      if (current[k] != v && k[0] == 'o') log.emplace_back(k, v);
      current[k] = v;
    }
    Sample expected;
    for (const auto& [k, v] : log) expected[k] = v;
    CHECK(m.drain_output_changes() == expected);
  }
}

TEST_CASE("canonical snapshot format") {
  Memory empty;
  CHECK(empty.canonical_snapshot().empty());

  Memory m;
  m.set({{"x", 1.0}});
  CHECK(m.canonical_snapshot() == "x=3ff0000000000000;");

  Memory l;
  l.declare("b", Scope::Input, 0.0, true);
  l.declare("a", Scope::Input, 1.0, false);
  CHECK(l.canonical_snapshot() == "a=3ff0000000000000;");

  Memory s;
  s.declare_state("__state__/0", 2.0);
  s.declare("x", Scope::Input, 0.1);
  CHECK(s.canonical_snapshot() == "__state__/0=4000000000000000;x=3fb999999999999a;");
}

TEST_CASE("hash is FNV-1a over the snapshot") {
  CHECK(fnv1a64("") == kFnvEmpty);
  Memory empty;
  CHECK(empty.hash() == kFnvEmpty);

  Memory m;
  m.set({{"x", 1.0}});
  CHECK(m.hash() == kFnvX1);

  Memory a;
  a.declare("a", Scope::Input, 1.0);
  CHECK(a.hash() == kFnvA1);
  a.declare("x", Scope::Output, -2.5);
  CHECK(a.hash() == kFnvA1Xm25);

  Memory p;
  Memory q;
  p.declare("a", Scope::Input, 1.0);
  q.declare("a", Scope::Input, 1.0);
  p.declare("time", Scope::Input, 5.0, true);
  q.declare("time", Scope::Input, 9.0, true);
  CHECK(p.hash() == q.hash());
}

TEST_CASE("hash distinguishes 0.0 from -0.0") {
  Memory p;
  Memory q;
  p.declare("a", Scope::Input, 0.0);
  q.declare("a", Scope::Input, -0.0);
  CHECK(p.hash() != q.hash());
}

TEST_CASE("property: dirty set equals keys differing from the last clear point") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Memory m;
    const std::vector<std::string> keys{"a", "b", "c", "d", "e"};
    for (const auto& k : keys) m.declare(k, Scope::Input);
    std::map<std::string, double> baseline;
    std::map<std::string, double> now;
    for (const auto& k : keys) baseline[k] = now[k] = 0.0;
    for (int step = 0; step < 100; ++step) {
      if (rng() % 10 == 0) {
        m.clear_dirty();
        baseline = now;
      } else {
        const std::string& k = keys[rng() % keys.size()];
        double v = static_cast<double>(rng() % 3);
        m.set({{k, v}});
        now[k] = v;
      }
      std::vector<std::string> expected;
      for (const auto& k : keys) {
        if (now[k] != baseline[k]) expected.push_back(k);
      }
      REQUIRE(m.dirty_keys() == expected);
    }
  }
}

TEST_CASE("property: equal snapshots give equal hashes, local data never matters") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Memory p;
    Memory q;
    int n = static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      double v = static_cast<double>(rng() % 4) - 1.5;
      std::string k = "k" + std::to_string(i);
      p.declare(k, Scope::Input, v);
      q.declare(k, Scope::Output, v);
    }
    p.declare("loc", Scope::Input, static_cast<double>(rng() % 100), true);
    q.declare("loc", Scope::Input, static_cast<double>(rng() % 100), true);
    CHECK(p.canonical_snapshot() == q.canonical_snapshot());
    CHECK(p.hash() == q.hash());
  }
}

TEST_CASE("parse_snapshot round-trips and rejects malformed text") {
  Memory m;
  m.declare("a", Scope::Input, 1.0);
  m.declare("b", Scope::Output, -0.0);
  auto parsed = parse_snapshot(m.canonical_snapshot());
  REQUIRE(parsed);
  REQUIRE(parsed->size() == 2);
  CHECK((*parsed)[0].first == "a");
  CHECK(std::signbit((*parsed)[1].second));

  CHECK_FALSE(parse_snapshot("a=3ff000000000000;"));           // 15 digits
  CHECK_FALSE(parse_snapshot("a=3ff0000000000000"));           // no terminator
  CHECK_FALSE(parse_snapshot("b=3ff0000000000000;a=3ff0000000000000;"));  // unsorted
  CHECK_FALSE(parse_snapshot("a=3FF0000000000000;"));          // uppercase
  CHECK_FALSE(parse_snapshot("=3ff0000000000000;"));
  CHECK(parse_snapshot("")->empty());
}

TEST_CASE("adopt_snapshot copies non-local values and is atomic on failure") {
  Memory master;
  master.declare("x", Scope::Input, 4.0);
  master.declare_state("__state__/0", 1.0);
  master.declare("time", Scope::Input, 7.0, true);

  Memory slave;
  slave.declare("x", Scope::Input, 3.0);
  slave.declare_state("__state__/0", 0.0);
  slave.declare("time", Scope::Input, 8.0, true);
  slave.declare("extra", Scope::Input, 5.0);

  std::uint64_t before = slave.hash();
  CHECK_THROWS_AS(slave.adopt_snapshot(master.canonical_snapshot().substr(0, 10)), Error);
  CHECK(slave.hash() == before);

  slave.adopt_snapshot(master.canonical_snapshot());
  CHECK(slave.hash() == master.hash());
  CHECK(slave.get("x") == 4.0);
  CHECK(slave.get("time") == 8.0);
  CHECK(slave.get("extra") == 0.0);
  // Changed values are dirty so the conditions reading them get re-checked.
  CHECK(slave.is_dirty(*slave.find("x")));
  CHECK(slave.is_dirty(*slave.find("extra")));
  CHECK_FALSE(slave.is_dirty(*slave.find("__state__/0")));
}
