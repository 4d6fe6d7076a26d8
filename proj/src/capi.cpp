#include "abtm/abtm.h"

#include <json.hpp>

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "abtm/bench.hpp"
#include "abtm/dsl.hpp"
#include "abtm/error.hpp"
#include "abtm/sample_io.hpp"
#include "abtm/sim.hpp"

struct abtm_tree {
  abtm::Tree tree;
};

namespace {

thread_local std::string g_last_error;

abtm_status to_status(abtm::ErrorCode code) { return static_cast<abtm_status>(static_cast<int>(code) + 1); }

abtm_status fail(abtm_status s, const std::string& message) {
  g_last_error = message;
  return s;
}

// Runs `fn`, translating exceptions into status codes.
template <class Fn>
abtm_status guard(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const abtm::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(ABTM_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(ABTM_E_INTERNAL, e.what());
  }
}

char* dup(const std::string& s) {
  auto* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

abtm::bench::BenchConfig bench_config(const char* text) {
  using nlohmann::json;
  abtm::bench::BenchConfig c;
  if (!text || !*text) return c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw abtm::SyntaxError(e.byte, std::string("bench config: ") + e.what());
  }
  auto bad = [](const std::string& what) { throw abtm::Error(abtm::ErrorCode::ConfigError, "bench config: " + what); };
  if (!j.is_object()) bad("expected an object");
  auto integer = [&](const json& v, const char* name) {
    if (!v.is_number_integer()) bad(std::string(name) + " must be an integer");
    return v.get<long long>();
  };
  auto range = [&](const json& v, const char* name) {
    if (!v.is_array() || v.size() != 2) bad(std::string(name) + " must be [lo, hi]");
    return abtm::bench::Range{static_cast<int>(integer(v[0], name)), static_cast<int>(integer(v[1], name))};
  };
  for (const auto& [k, v] : j.items()) {
    if (k == "trees") {
      c.tree_count = static_cast<int>(integer(v, "trees"));
    } else if (k == "height") {
      c.height = range(v, "height");
    } else if (k == "children") {
      c.children = range(v, "children");
    } else if (k == "modes") {
      if (!v.is_array()) bad("modes must be a list");
      c.modes.clear();
      for (const auto& m : v) {
        auto mode = m.is_string() ? abtm::bench::parse_mode(m.get<std::string>()) : std::nullopt;
        if (!mode) bad("unknown mode " + m.dump());
        c.modes.push_back(*mode);
      }
    } else if (k == "samples") {
      c.samples = static_cast<int>(integer(v, "samples"));
    } else if (k == "seed") {
      if (integer(v, "seed") < 0 && !v.is_number_unsigned()) bad("seed must be non-negative");
      c.seed = v.get<std::uint64_t>();
    } else if (k == "target_nodes") {
      c.target_nodes = static_cast<int>(integer(v, "target_nodes"));
    } else if (k == "target_tolerance") {
      if (!v.is_number()) bad("target_tolerance must be a number");
      c.target_tolerance = v.get<double>();
    } else if (k == "tiers") {
      if (!v.is_array()) bad("tiers must be a list");
      c.tiers.clear();
      for (const auto& t : v) c.tiers.push_back(static_cast<int>(integer(t, "tiers")));
    } else if (k == "repetitions") {
      c.repetitions = static_cast<int>(integer(v, "repetitions"));
    } else if (k == "inject_mismatch") {
      if (!v.is_boolean()) bad("inject_mismatch must be true or false");
      c.inject_mismatch = v.get<bool>();
    } else {
      bad("unknown field '" + k + "'");
    }
  }
  c.check();
  return c;
}

}  // namespace

extern "C" {

const char* abtm_version(void) { return "1.0.0"; }

const char* abtm_status_name(abtm_status status) {
  switch (status) {
    case ABTM_OK: return "OK";
    case ABTM_E_INTERNAL: return "Internal";
    default: break;
  }
  int code = static_cast<int>(status) - 1;
  if (code < 0 || code > static_cast<int>(abtm::ErrorCode::InvalidArgument)) return "Unknown";
  return abtm::to_string(static_cast<abtm::ErrorCode>(code)).data();
}

const char* abtm_last_error(void) { return g_last_error.c_str(); }

void abtm_free(char* text) { std::free(text); }

abtm_status abtm_check(const char* tree_text, char** report, int* errors) {
  if (!tree_text) return fail(ABTM_E_INVALID_ARGUMENT, "tree text is NULL");
  return guard([&] {
    auto diags = abtm::validate(abtm::parse_tree(tree_text));
    std::string text;
    int n = 0;
    for (const auto& d : diags) {
      text += d.to_string() + "\n";
      n += d.severity == abtm::Severity::Error;
    }
    put(report, text);
    if (errors) *errors = n;
    return ABTM_OK;
  });
}

abtm_status abtm_tree_load(const char* tree_text, abtm_tree** out) {
  if (!tree_text || !out) return fail(ABTM_E_INVALID_ARGUMENT, "NULL argument");
  *out = nullptr;
  return guard([&] {
    *out = new abtm_tree{abtm::load_tree(tree_text)};
    return ABTM_OK;
  });
}

void abtm_tree_free(abtm_tree* tree) { delete tree; }

abtm_status abtm_tree_start(abtm_tree* tree, char** outputs) {
  if (!tree) return fail(ABTM_E_INVALID_ARGUMENT, "tree is NULL");
  return guard([&] {
    put(outputs, abtm::sample_to_json(tree->tree.start()));
    return ABTM_OK;
  });
}

abtm_status abtm_tree_callback(abtm_tree* tree, const char* sample_json, char** outputs) {
  if (!tree || !sample_json) return fail(ABTM_E_INVALID_ARGUMENT, "NULL argument");
  return guard([&] {
    abtm::Sample s = abtm::sample_from_json(sample_json);
    put(outputs, abtm::sample_to_json(tree->tree.callback(s)));
    return ABTM_OK;
  });
}

abtm_status abtm_simulate(const char* scenario_path, char** report_json, char** summary, int* verdict) {
  if (!scenario_path) return fail(ABTM_E_INVALID_ARGUMENT, "scenario path is NULL");
  return guard([&] {
    abtm::sim::SimReport r = abtm::sim::run_scenario(abtm::sim::load_scenario(scenario_path));
    put(report_json, r.to_json());
    put(summary, r.to_text());
    if (verdict) *verdict = r.verdict ? 1 : 0;
    return ABTM_OK;
  });
}

abtm_status abtm_bench(const char* config_json, char** csv, char** aggregate_json, int* gate_passed) {
  return guard([&] {
    abtm::bench::BenchReport r = abtm::bench::run_bench(bench_config(config_json));
    put(csv, r.to_csv());
    put(aggregate_json, r.aggregate_json());
    if (gate_passed) *gate_passed = r.mismatch ? 0 : 1;
    if (r.mismatch) g_last_error = *r.mismatch;
    return ABTM_OK;
  });
}

}  // extern "C"
