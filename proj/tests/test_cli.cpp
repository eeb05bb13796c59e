#include <catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BILEVEL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path tmp = fs::path(BILEVEL_TEST_TMP) / "cli";

// small synthetic instance flags shared by the run tests
const std::string small =
    " --n 24 --m-train 16 --m-val 8 --m-test 8 --k 2 --inner-budget 60 --max-outer 15";

}  // namespace

TEST_CASE("cli usage errors exit with 2", "[cli]") {
  CHECK(run_cli("definitely-not-a-command") == 2);
  CHECK(run_cli("run --method bogus --out " + (tmp / "x").string() + small) == 2);
  CHECK(run_cli("run --method pgm_bda --model gen --out " + (tmp / "x").string() + small) == 2);
  CHECK(run_cli("run --preset no-such-preset --out " + (tmp / "x").string()) == 2);
  CHECK(run_cli("run --method admm_bda --model en --q 7 --out " + (tmp / "x").string()) == 2);
}

TEST_CASE("cli generate is deterministic", "[cli]") {
  const fs::path d1 = tmp / "gen1", d2 = tmp / "gen2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  const std::string flags = " --n 16 --m-train 10 --m-val 4 --m-test 4 --k 2 --seed 9 --out ";
  REQUIRE(run_cli("generate" + flags + d1.string()) == 0);
  REQUIRE(run_cli("generate" + flags + d2.string()) == 0);
  for (const char* f : {"train.csv", "val.csv", "test.csv"})
    CHECK(slurp(d1 / f) == slurp(d2 / f));

  // noiseless generation satisfies b = A x exactly: regenerate and check meta
  const fs::path d3 = tmp / "gen3";
  fs::remove_all(d3);
  REQUIRE(run_cli("generate" + flags + d3.string() + " --noise-level 0") == 0);
  CHECK(fs::exists(d3 / "meta.json"));
}

TEST_CASE("cli run produces the CSV pair and exits 0", "[cli]") {
  const fs::path d = tmp / "run1";
  fs::remove_all(d);
  const int rc = run_cli(
      "run --method random --model en --reps 2 --seed 4 --random-budget 4 --sigma 0.5 "
      "--zeta 50 --s 1e-9 --out " +
      d.string() + small);
  REQUIRE(rc == 0);
  const std::string results = slurp(d / "random_results.csv");
  CHECK(results.rfind("method,model,noise,seed,status,") == 0);
  // header + 2 rows
  CHECK(std::count(results.begin(), results.end(), '\n') == 3);
  CHECK(fs::exists(d / "random_trajectories.csv"));
}

TEST_CASE("cli run rejects invalid combinations before computing", "[cli]") {
  CHECK(run_cli("run --method admm_bda --model en --reps 0 --out " + (tmp / "r0").string()) == 2);
}
