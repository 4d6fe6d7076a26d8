#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "golden.hpp"

namespace {

void check_golden(const std::string& stem) {
  std::string actual = golden::transcript(stem);
  std::string path = golden::data_path(stem + ".golden");
  if (std::getenv("ABTM_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << actual;
  }
  CHECK(actual == golden::read_file(path));
}

}  // namespace

TEST_CASE("golden: multi-response landing mission") { check_golden("landing"); }
TEST_CASE("golden: Skipper with an unknown distance") { check_golden("pick"); }
TEST_CASE("golden: latch with reset") { check_golden("latch_reset"); }
TEST_CASE("golden: periodic synchronous subtree") { check_golden("periodic"); }
