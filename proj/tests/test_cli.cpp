// End-to-end checks of the softdag executable: exit codes and output files.
#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::path(SOFTDAG_TEST_WORKDIR) / "cli";

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + SOFTDAG_CLI_PATH + "\" " + args + " > \"" +
                          (kWork / "stdout.txt").string() + "\" 2> \"" + (kWork / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string put(const std::string& name, const std::string& contents) {
  const fs::path p = kWork / name;
  std::ofstream(p) << contents;
  return "\"" + p.string() + "\"";
}

std::string config(const std::string& name) { return "\"" + (fs::path(SOFTDAG_CONFIG_DIR) / name).string() + "\""; }

std::string out(const std::string& name) { return "\"" + (kWork / name).string() + "\""; }

struct Fresh {
  Fresh() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fresh, "usage errors exit 2, help exits 0") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("exact") == 2);
  CHECK(run("exact --config " + config("fig1.json") + " --bogus") == 2);
  CHECK(run("--help") == 0);
  CHECK(run("--version") == 0);
}

TEST_CASE_FIXTURE(Fresh, "exact writes the distribution and summary") {
  REQUIRE(run("exact --config " + config("fig1.json") + " --out " + out("exact")) == 0);
  const auto summary = json::parse(slurp(kWork / "exact" / "summary.json"));
  CHECK(summary["jsd"].get<double>() < 1e-10);
  CHECK(summary["biased"] == false);
  const auto csv = slurp(kWork / "exact" / "distribution.csv");
  CHECK(csv.rfind("state,label,probability,gibbs\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  REQUIRE(run("exact --config " + config("fig1.json") + " --reward uncorrected --out " + out("biased")) == 0);
  const auto b = json::parse(slurp(kWork / "biased" / "summary.json"));
  CHECK(b["jsd"].get<double>() > 0.0);
  CHECK(b["biased"] == true);

  CHECK(run("exact --config " + config("fig1.json") + " --alpha -2") == 2);
  CHECK(run("exact --config " + config("fig1.json") + " --reward dense") == 2);
}

TEST_CASE_FIXTURE(Fresh, "malformed inputs exit 2 without partial outputs") {
  CHECK(run("exact --config " + put("broken.json", "{\"env\": ") + " --out " + out("x")) == 2);
  CHECK_FALSE(fs::exists(kWork / "x"));
  CHECK(run("exact --config " + put("unknown.json", R"({"env": {"kind": "fig1", "colour": 1}})") + " --out " +
            out("y")) == 2);
  CHECK_FALSE(fs::exists(kWork / "y"));
  CHECK(run("exact --config " + out("missing.json")) == 2);
  const auto big = put("big.json", R"({"kind": "factor_graph", "d": 8, "K": 8, "limits": {"max_states": 1000}})");
  CHECK(run("exact --config " + big + " --out " + out("z")) == 2);
  CHECK_FALSE(fs::exists(kWork / "z"));
}

TEST_CASE_FIXTURE(Fresh, "validate") {
  CHECK(run("validate --config " + config("fig1.json")) == 0);
  const auto cyc = put("cycle.json", R"({"num_states": 3, "edges": [[0, 1], [1, 2], [2, 1]], "terminating": [2]})");
  CHECK(run("validate --config " + cyc) == 1);
  CHECK(json::parse(slurp(kWork / "stdout.txt"))["is_valid"] == false);
  CHECK(run("check --config " + cyc) == 1);
  CHECK(run("exact --config " + cyc) == 2);
}

TEST_CASE_FIXTURE(Fresh, "equiv exit codes") {
  CHECK(run("equiv --config " + config("fig1.json") + " --alpha 0.5,1,2 --out " + out("eq")) == 0);
  const auto rep = json::parse(slurp(kWork / "eq" / "equiv.json"));
  CHECK(rep["passed"] == true);
  CHECK(rep["runs"].size() == 9);
  CHECK(run("equiv --config " + config("subset.json") + " --pair pisql-mdb --alpha 0.5 --alpha 2") == 0);
  CHECK(run("equiv --config " + config("factor_graph_tb.json") + " --pair pisql-mdb") == 2);
  CHECK(run("equiv --config " + config("fig1.json") + " --pair pcl-subtb --reward uncorrected") == 1);
  CHECK(json::parse(slurp(kWork / "stdout.txt"))["runs"][0]["violations"].size() > 0);
  CHECK(run("equiv --config " + config("fig1.json") + " --pair sql-db --tol 0 --ratio-tol 0") == 1);
  CHECK(run("equiv --config " + config("fig1.json") + " --pair nope") == 2);
}

TEST_CASE_FIXTURE(Fresh, "train writes reproducible outputs") {
  const auto cfg = put("train.json", R"({"env": {"kind": "factor_graph", "d": 2, "K": 2, "seed": 3},
    "train": {"objective": "db", "iterations": 500, "seed": 1}})");
  REQUIRE(run("train --config " + cfg + " --out " + out("a")) == 0);
  REQUIRE(run("train --config " + cfg + " --out " + out("b")) == 0);
  const auto ma = slurp(kWork / "a" / "metrics.csv");
  CHECK(ma.rfind("iteration,loss,jsd,pearson,epsilon\n", 0) == 0);
  CHECK(ma == slurp(kWork / "b" / "metrics.csv"));
  CHECK(json::parse(slurp(kWork / "a" / "params.json")).is_object());
  const auto manifest = json::parse(slurp(kWork / "a" / "manifest.json"));
  CHECK(manifest["config"]["train"]["iterations"] == 500);
  CHECK(manifest["diverged"] == false);

  // Re-running from the manifest's echoed config reproduces the metrics.
  const auto echo = put("echo.json", manifest["config"].dump());
  REQUIRE(run("train --config " + echo + " --out " + out("c")) == 0);
  CHECK(ma == slurp(kWork / "c" / "metrics.csv"));

  REQUIRE(run("train --config " + cfg + " --seed 5 --num-seeds 3 --jobs 2 --out " + out("multi")) == 0);
  for (int s : {5, 6, 7}) CHECK(fs::exists(kWork / "multi" / ("seed_" + std::to_string(s)) / "metrics.csv"));
  REQUIRE(run("train --config " + cfg + " --seed 6 --out " + out("single6")) == 0);
  CHECK(slurp(kWork / "single6" / "metrics.csv") == slurp(kWork / "multi" / "seed_6" / "metrics.csv"));
}

TEST_CASE_FIXTURE(Fresh, "train failures") {
  CHECK(run("train --config " + config("fig1.json") + " --out " + out("none")) == 2);
  CHECK_FALSE(fs::exists(kWork / "none"));
  const auto boom = put("boom.json", R"({"env": {"kind": "fig1", "energies": [0, 30, -30]}, "reward": {"alpha": 0.01},
    "train": {"objective": "db", "iterations": 2000, "learning_rate": 1e6}})");
  CHECK(run("train --config " + boom + " --out " + out("boom")) == 1);
  const auto m = json::parse(slurp(kWork / "boom" / "manifest.json"));
  CHECK(m["diverged"] == true);
  CHECK(fs::exists(kWork / "boom" / "metrics.csv"));
  CHECK(run("train --config " + config("factor_graph_tb.json") + " --objective pisql --out " + out("p")) == 2);
}
