#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct cli_run {
  int exit_code = -1;
  std::string out;
  std::string err;
};

cli_run invoke(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(PDRANPG_CLI_PATH) + " " + args + " > " + out.string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  cli_run r;
  r.exit_code = WEXITSTATUS(status);
  std::ostringstream so, se;
  so << std::ifstream(out).rdbuf();
  se << std::ifstream(err).rdbuf();
  r.out = so.str();
  r.err = se.str();
  return r;
}

fs::path make_workdir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("pdranpg_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_config(const fs::path& dir, const json& extra) {
  json cfg = {
      {"cmdp_path", std::string(PDRANPG_DATA_DIR) + "/threestate_random.json"},
      {"schedule",
       {{"epsilon", 0.2},
        {"epsilon_bias", 0.0},
        {"c_slat", 1.0},
        {"overrides", {{"K", 40}, {"H", 30}}}}},
      {"mode", "exact"},
      {"seeds", {1, 2}},
      {"record_stride", 10},
      {"output_dir", (dir / "out").string()},
  };
  cfg.update(extra, true);
  const fs::path path = dir / "config.json";
  std::ofstream(path) << cfg.dump(2);
  return path.string();
}

std::string slurp(const fs::path& p) {
  std::ostringstream ss;
  ss << std::ifstream(p).rdbuf();
  return ss.str();
}

long count_lines(const std::string& text) {
  long n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("run writes one CSV per seed plus a summary") {
  const auto dir = make_workdir("run");
  const auto cfg = write_config(dir, {});
  const auto r = invoke("run " + cfg, dir);
  INFO(r.err);
  CHECK(r.exit_code == 0);
  const std::string csv1 = slurp(dir / "out" / "seed_1.csv");
  const std::string csv2 = slurp(dir / "out" / "seed_2.csv");
  CHECK(count_lines(csv1) == 1 + 5);  // header + k = 0,10,20,30,40
  CHECK(csv1.substr(0, csv1.find('\n')) ==
        "k,optimality_gap,violation,phi_surrogate,omega_norm,lambda,samples_cumulative");
  // Exact mode ignores the seed entirely.
  CHECK(csv1 == csv2);

  json summary;
  std::ifstream(dir / "out" / "summary.json") >> summary;
  CHECK(summary["mode"] == "exact");
  CHECK(summary["schedule"]["K"] == 40);
  CHECK(summary["schedule"]["tau"] == doctest::Approx(0.2));
  CHECK(summary["schedule"]["measured"].contains("G"));
  CHECK(summary["per_seed"].size() == 2);
}

TEST_CASE("exact runs are byte-identical across invocations") {
  const auto dir = make_workdir("repeat");
  const auto cfg = write_config(dir, {});
  REQUIRE(invoke("run " + cfg, dir).exit_code == 0);
  const std::string first = slurp(dir / "out" / "seed_1.csv");
  REQUIRE(invoke("run " + cfg, dir).exit_code == 0);
  CHECK(first == slurp(dir / "out" / "seed_1.csv"));
}

TEST_CASE("seed offset renames the output streams") {
  const auto dir = make_workdir("offset");
  const auto cfg = write_config(dir, {});
  const auto r = invoke("run " + cfg + " --seed-offset 100", dir);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "out" / "seed_101.csv"));
  CHECK(fs::exists(dir / "out" / "seed_102.csv"));
}

TEST_CASE("missing cmdp file exits 2 and names the path") {
  const auto dir = make_workdir("missing");
  const auto cfg = write_config(dir, {{"cmdp_path", "/nope/missing_cmdp.json"}});
  const auto r = invoke("run " + cfg, dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("/nope/missing_cmdp.json") != std::string::npos);
}

TEST_CASE("infeasible schedule exits 3") {
  const auto dir = make_workdir("sched");
  const auto cfg = write_config(
      dir, {{"schedule",
             {{"epsilon", 0.2}, {"c_slat", 1.0}, {"overrides", {{"eta", 11.0}, {"tau", 0.5}}}}}});
  const auto r = invoke("run " + cfg, dir);
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("eta*tau") != std::string::npos);
}

TEST_CASE("stochastic smoke run with instrumentation") {
  const auto dir = make_workdir("stoch");
  const auto cfg = write_config(
      dir, {{"mode", "stochastic"}, {"seeds", {7}}, {"record_stride", 5}});
  const auto r = invoke("run " + cfg, dir);
  INFO(r.err);
  CHECK(r.exit_code == 0);
  const std::string csv = slurp(dir / "out" / "seed_7.csv");
  CHECK(count_lines(csv) == 1 + 9);  // header + k = 0,5,...,40
  json summary;
  std::ifstream(dir / "out" / "summary.json") >> summary;
  CHECK(summary["per_seed"][0]["samples"].get<long>() > 0);
}

TEST_CASE("sweep requires epsilons and emits the combined CSV") {
  const auto dir = make_workdir("sweep");
  const auto cfg = write_config(dir, {});

  SUBCASE("no epsilons exits 2") {
    const auto r = invoke("sweep " + cfg, dir);
    CHECK(r.exit_code == 2);
  }
  SUBCASE("single point matches run plus one summary row") {
    const auto r = invoke("sweep " + cfg + " --epsilons 0.2", dir);
    INFO(r.err);
    CHECK(r.exit_code == 0);
    const std::string combined = slurp(dir / "out" / "sweep.csv");
    CHECK(count_lines(combined) == 2);
    CHECK(combined.substr(0, combined.find('\n')) == "epsilon,samples,final_gap,final_violation");
    CHECK(fs::exists(dir / "out" / "eps_0.2" / "seed_1.csv"));
    CHECK(fs::exists(dir / "out" / "eps_0.2" / "summary.json"));
  }
}

TEST_CASE("verify passes on the bandit instance and rejects corrupted input") {
  const auto dir = make_workdir("verify");

  SUBCASE("bundled bandit instance verifies") {
    const auto cfg = write_config(
        dir, {{"cmdp_path", std::string(PDRANPG_DATA_DIR) + "/bandit_1state.json"},
              {"seeds", {1}}});
    const auto r = invoke("verify " + cfg, dir);
    INFO(r.out);
    INFO(r.err);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("lemma4_unbiasedness") != std::string::npos);
    CHECK(r.out.find("FAIL") == std::string::npos);
  }
  SUBCASE("corrupted transition row fails validation with exit 2") {
    json bad;
    std::ifstream(std::string(PDRANPG_DATA_DIR) + "/bandit_1state.json") >> bad;
    bad["transition"][0][0][0] = 0.9;
    const fs::path bad_path = dir / "bad_cmdp.json";
    std::ofstream(bad_path) << bad.dump();
    const auto cfg = write_config(dir, {{"cmdp_path", bad_path.string()}});
    const auto r = invoke("verify " + cfg, dir);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("transition[0][0]") != std::string::npos);
  }
}
