// abtm: check, run, simulate and benchmark behavior trees through the C API.
//
// Exit codes: 0 success; 1 tree errors, runtime errors, inconsistent
// simulation or failed equivalence gate; 2 I/O, usage or configuration
// errors.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "abtm/abtm.h"

namespace {

constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

struct Owned {
  char* p = nullptr;
  ~Owned() { abtm_free(p); }
  std::string str() const { return p ? p : ""; }
};

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return static_cast<bool>(out);
}

int error(const std::string& message, int code) {
  std::cerr << "abtm: " << message << "\n";
  return code;
}

std::string api_error(abtm_status s) { return std::string(abtm_status_name(s)) + ": " + abtm_last_error(); }

int cmd_check(const std::string& path) {
  auto text = read_file(path);
  if (!text) return error("cannot read " + path, kUsage);
  Owned report;
  int errors = 0;
  abtm_status s = abtm_check(text->c_str(), &report.p, &errors);
  if (s == ABTM_E_SYNTAX || s == ABTM_E_DUPLICATE_NAME) {
    std::cout << path << ":" << abtm_last_error() << "\n";
    return kFail;
  }
  if (s != ABTM_OK) return error(api_error(s), kFail);
  std::istringstream lines(report.str());
  for (std::string line; std::getline(lines, line);) std::cout << path << ":" << line << "\n";
  return errors > 0 ? kFail : kOk;
}

int cmd_run(const std::string& path, const std::string& samples) {
  auto text = read_file(path);
  if (!text) return error("cannot read " + path, kUsage);
  abtm_tree* raw = nullptr;
  abtm_status s = abtm_tree_load(text->c_str(), &raw);
  if (s != ABTM_OK) return error(path + ": " + api_error(s), s == ABTM_E_IO ? kUsage : kFail);
  std::unique_ptr<abtm_tree, void (*)(abtm_tree*)> tree(raw, abtm_tree_free);

  std::ifstream file;
  std::istream* in = &std::cin;
  if (samples != "-") {
    file.open(samples, std::ios::binary);
    if (!file) return error("cannot read " + samples, kUsage);
    in = &file;
  }

  auto emit = [](const Owned& out) {
    if (out.str() != "{}") std::cout << out.str() << "\n";
  };
  {
    Owned out;
    if ((s = abtm_tree_start(tree.get(), &out.p)) != ABTM_OK) return error("start: " + api_error(s), kFail);
    emit(out);
  }
  std::uint64_t index = 0;
  for (std::string line; std::getline(*in, line);) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++index;
    Owned out;
    if ((s = abtm_tree_callback(tree.get(), line.c_str(), &out.p)) != ABTM_OK) {
      return error("sample " + std::to_string(index) + ": " + api_error(s), kFail);
    }
    emit(out);
  }
  std::cout.flush();
  return kOk;
}

int cmd_simulate(const std::string& path, const std::string& report_path) {
  Owned report;
  Owned summary;
  int verdict = 0;
  abtm_status s = abtm_simulate(path.c_str(), &report.p, &summary.p, &verdict);
  if (s == ABTM_E_DIVIDE_BY_ZERO || s == ABTM_E_CYCLE_BUDGET || s == ABTM_E_MALFORMED_DUMP || s == ABTM_E_INTERNAL) {
    return error(api_error(s), kFail);
  }
  if (s != ABTM_OK) return error(path + ": " + api_error(s), kUsage);
  if (report_path.empty()) {
    std::cout << report.str();
    std::cerr << summary.str();
  } else {
    if (!write_file(report_path, report.str())) return error("cannot write " + report_path, kUsage);
    std::cout << summary.str();
  }
  return verdict ? kOk : kFail;
}

struct BenchFlags {
  int trees = 200;
  std::string height = "3..5";
  std::string children = "3..7";
  std::string mode = "both";
  int samples = 1000;
  std::uint64_t seed = 1;
  std::optional<int> target_nodes;
  int repetitions = 3;
  std::string out = ".";
  bool inject_mismatch = false;
};

std::optional<std::pair<int, int>> parse_range(const std::string& text) {
  auto dots = text.find("..");
  std::string lo = dots == std::string::npos ? text : text.substr(0, dots);
  std::string hi = dots == std::string::npos ? text : text.substr(dots + 2);
  int a = 0;
  int b = 0;
  auto ra = std::from_chars(lo.data(), lo.data() + lo.size(), a);
  auto rb = std::from_chars(hi.data(), hi.data() + hi.size(), b);
  if (ra.ec != std::errc() || ra.ptr != lo.data() + lo.size() || rb.ec != std::errc() || rb.ptr != hi.data() + hi.size()) {
    return std::nullopt;
  }
  return std::make_pair(a, b);
}

int cmd_bench(BenchFlags f) {
  if (const char* env = std::getenv("ABTM_SEED")) {
    std::string_view v(env);
    auto r = std::from_chars(v.data(), v.data() + v.size(), f.seed);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) return error("ABTM_SEED is not an unsigned integer", kUsage);
  }
  auto height = parse_range(f.height);
  auto children = parse_range(f.children);
  if (!height) return error("--height expects A..B", kUsage);
  if (!children) return error("--children expects A..B", kUsage);

  nlohmann::json cfg;
  cfg["trees"] = f.trees;
  cfg["height"] = {height->first, height->second};
  cfg["children"] = {children->first, children->second};
  cfg["modes"] = f.mode == "both" ? nlohmann::json{"dense", "sparse"} : nlohmann::json{f.mode};
  cfg["samples"] = f.samples;
  cfg["seed"] = f.seed;
  cfg["repetitions"] = f.repetitions;
  if (f.target_nodes) cfg["target_nodes"] = *f.target_nodes;
  if (f.inject_mismatch) cfg["inject_mismatch"] = true;

  Owned csv;
  Owned agg;
  int gate = 0;
  abtm_status s = abtm_bench(cfg.dump().c_str(), &csv.p, &agg.p, &gate);
  if (s == ABTM_E_CONFIG || s == ABTM_E_SYNTAX) return error(api_error(s), kUsage);
  if (s != ABTM_OK) return error(api_error(s), kFail);

  std::error_code ec;
  std::filesystem::create_directories(f.out, ec);
  std::string csv_path = (std::filesystem::path(f.out) / "bench.csv").string();
  std::string json_path = (std::filesystem::path(f.out) / "bench.json").string();
  if (!write_file(csv_path, csv.str())) return error("cannot write " + csv_path, kUsage);
  if (!write_file(json_path, agg.str())) return error("cannot write " + json_path, kUsage);

  auto doc = nlohmann::json::parse(agg.str());
  if (doc.contains("ratio")) {
    for (const auto& a : doc["ratio"]) {
      std::cout << a["group"].get<std::string>() << ": trees " << a["trees"] << ", median R " << a["median_R"]
                << " (min " << a["min_R"] << ", max " << a["max_R"] << ")\n";
    }
  }
  std::cout << "wrote " << csv_path << " and " << json_path << "\n";
  if (!gate) return error("equivalence gate failed: " + std::string(abtm_last_error()), kFail);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous behavior trees with memory: check, run, simulate, benchmark"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(abtm_version()));

  std::string tree_path;
  auto* check = app.add_subcommand("check", "Validate a tree file");
  check->add_option("file", tree_path, "Tree file")->required();

  std::string samples = "-";
  auto* run = app.add_subcommand("run", "Run a tree over JSON samples, one per line");
  run->add_option("file", tree_path, "Tree file")->required();
  run->add_option("--samples", samples, "Sample file, or - for standard input");

  std::string scenario;
  std::string report;
  auto* sim = app.add_subcommand("simulate", "Run a multi-replica scenario");
  sim->add_option("scenario", scenario, "Scenario JSON file")->required();
  sim->add_option("--report", report, "Write the JSON report here (default: standard output)");

  BenchFlags bf;
  auto* bench = app.add_subcommand("bench", "Classical versus asynchronous timing on random trees");
  bench->add_option("--trees", bf.trees, "Number of random trees");
  bench->add_option("--height", bf.height, "Height range A..B");
  bench->add_option("--children", bf.children, "Children per control node A..B");
  bench->add_option("--mode", bf.mode, "dense, sparse or both")->check(CLI::IsMember({"dense", "sparse", "both"}));
  bench->add_option("--samples", bf.samples, "Samples per tree");
  bench->add_option("--seed", bf.seed, "Base seed (ABTM_SEED overrides)");
  bench->add_option("--target-nodes", bf.target_nodes, "Keep trees within 20% of this node count");
  bench->add_option("--repetitions", bf.repetitions, "Timed repetitions per engine");
  bench->add_option("--out", bf.out, "Directory for bench.csv and bench.json");
  bench->add_flag("--inject-mismatch", bf.inject_mismatch)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (*check) return cmd_check(tree_path);
  if (*run) return cmd_run(tree_path, samples);
  if (*sim) return cmd_simulate(scenario, report);
  return cmd_bench(bf);
}
