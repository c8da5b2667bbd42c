#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "topocov/config.hpp"
#include "topocov/runner.hpp"

using namespace topocov;
namespace fs = std::filesystem;

namespace {

RunConfig from_text(const std::string& experiment, const std::string& text) {
  std::istringstream in(text);
  return parse_config(experiment, in);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("topocov_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::string& args) {
  int status = std::system((std::string(TOPOCOV_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing and validation") {
  auto cfg = from_text("sample", "[run]\nseed = 4\n[grid]\nh = 0.5\n[sample]\nbox = 0, 2, 0, 1\n");
  CHECK(cfg.seed == 4u);
  CHECK(cfg.real("grid.h") == 0.5);
  CHECK(cfg.rect("sample.box").x1 == 2.0);
  CHECK(cfg.str("kernel.name") == "bargmann-fock");

  auto expect_validation = [](const std::string& experiment, const std::string& text) {
    try {
      from_text(experiment, text);
      FAIL("expected a validation error for: " << text);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Validation);
    }
  };
  expect_validation("sample", "[grid]\nh = -0.25\n");
  expect_validation("sample", "[grid]\nh = abc\n");
  expect_validation("sample", "[grid]\nspacing = 0.25\n");
  expect_validation("sample", "[piterbarg]\nm = 1\n");
  expect_validation("sample", "[sample]\nbox = 0, 1, 2\n");
  expect_validation("sample", "[sample]\nbox = 1, 0, 0, 1\n");
  expect_validation("sample", "[sample]\ndraws = 0\n");
  expect_validation("sample", "[sample]\nmethod = magic\n");
  expect_validation("formula", "[formula]\ncorner_strata = maybe\n");
  expect_validation("nosuch", "");

  auto noseed = from_text("sample", "");
  CHECK_THROWS_AS(noseed.require_seed(), Error);
}

TEST_CASE("config hash follows meaningful fields only") {
  auto base = from_text("mixing", "[run]\nseed = 1\n");
  auto same = from_text("mixing", "[run]\nseed = 99\nworkers = 4\nout = elsewhere\n[grid]\nh = 0.250\n"
                                  "[mixing]\nseparations = 2,3, 4\nfamily = CROSSING\n");
  CHECK(base.hash() == same.hash());
  for (const std::string& change : {"[grid]\nh = 0.5\n", "[mixing]\nseparations = 2, 3\n", "[mixing]\nn = 5000\n",
                                    "[kernel]\nname = rational\n", "[kernel]\nlength = 2\n", "[mean]\nlevel = 0.1\n",
                                    "[mixing]\nc_d = 2\n"}) {
    INFO(change);
    CHECK(from_text("mixing", change).hash() != base.hash());
  }
  CHECK(from_text("piterbarg", "").hash() != from_text("sample", "").hash());
}

TEST_CASE("piterbarg run gives the half-space covariance") {
  auto cfg = load_config("piterbarg", std::string(TOPOCOV_CONFIGS) + "/piterbarg.ini");
  cfg.out_dir = scratch_dir("piterbarg").string();
  auto r = run_experiment(cfg);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.header == "format_version,experiment,config_hash,seed,m,rhs,lhs,mc_se,residual");
  std::vector<std::string> cells;
  std::stringstream row(r.rows[0]);
  for (std::string c; std::getline(row, c, ',');) cells.push_back(c);
  REQUIRE(cells.size() == 9);
  CHECK(cells[0] == std::to_string(kFormatVersion));
  CHECK(std::stod(cells[5]) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("summary rows are reproducible and worker-independent") {
  for (const std::string& e : {"sample", "piterbarg", "concentration", "kostlan", "harris", "mixing"}) {
    RunConfig cfg = default_config(e);
    cfg.seed = 12;
    if (e == "concentration") {
      set_config_value(cfg, "concentration.scales", "2, 3");
      set_config_value(cfg, "concentration.n", "200");
    }
    if (e == "kostlan") {
      set_config_value(cfg, "kostlan.degrees", "4, 8");
      set_config_value(cfg, "kostlan.n", "400");
      set_config_value(cfg, "kostlan.zero_n", "50");
    }
    if (e == "mixing") {
      set_config_value(cfg, "mixing.separations", "1, 2");
      set_config_value(cfg, "mixing.side", "1");
      set_config_value(cfg, "mixing.n", "400");
      set_config_value(cfg, "mixing.n_mc", "100");
    }
    if (e == "piterbarg") set_config_value(cfg, "piterbarg.n", "2000");
    auto a = run_experiment(cfg);
    cfg.workers = 3;
    auto b = run_experiment(cfg);
    INFO(e);
    CHECK(a.rows == b.rows);
    CHECK_FALSE(a.rows.empty());
  }
}

TEST_CASE("emitted files") {
  auto dir = scratch_dir("emit");
  RunConfig cfg = default_config("harris");
  cfg.seed = 3;
  cfg.out_dir = dir.string();
  auto r = run_experiment(cfg);
  auto paths = emit_outputs(r, cfg);
  emit_outputs(r, cfg);
  const std::string summary = read_file(dir / "harris_summary.csv");
  std::stringstream lines(summary);
  std::string header;
  std::getline(lines, header);
  CHECK(header == summary_header("harris"));
  int rows = 0;
  for (std::string l; std::getline(lines, l);) {
    ++rows;
    CHECK(l.rfind("1,harris," + cfg.hash_hex() + ",3,", 0) == 0);
  }
  CHECK(rows == 2 * static_cast<int>(r.rows.size()));
  const std::string stem = "harris_" + cfg.hash_hex() + "_3";
  CHECK(fs::exists(dir / (stem + ".json")));
  CHECK(read_file(dir / (stem + ".json")).find("\"format_version\": 1") != std::string::npos);
  const std::string self = read_file(dir / (stem + "_self.dat"));
  CHECK(self.rfind("# s self_scaled\n", 0) == 0);

  // An empty series leaves only the header.
  write_plot_data((dir / "empty.dat").string(), "s", "alpha", {}, {});
  CHECK(read_file(dir / "empty.dat") == "# s alpha\n");
  // A ledger with another header is refused.
  CHECK_THROWS_AS(append_summary((dir / "harris_summary.csv").string(), "other", "1"), Error);
}

TEST_CASE("mixing run writes alpha and bound series") {
  auto dir = scratch_dir("mixing");
  RunConfig cfg = default_config("mixing");
  cfg.seed = 5;
  cfg.out_dir = dir.string();
  set_config_value(cfg, "mixing.separations", "1, 2");
  set_config_value(cfg, "mixing.side", "1");
  set_config_value(cfg, "mixing.n", "400");
  set_config_value(cfg, "mixing.n_mc", "100");
  auto r = run_experiment(cfg);
  emit_outputs(r, cfg);
  const std::string stem = "mixing_" + cfg.hash_hex() + "_5";
  CHECK(read_file(dir / (stem + "_alpha.dat")).rfind("# s alpha\n", 0) == 0);
  CHECK(read_file(dir / (stem + "_bound.dat")).rfind("# s bound\n", 0) == 0);
}

TEST_CASE("command line exit codes") {
  auto dir = scratch_dir("cli");
  const std::string out = " --out " + dir.string();
  CHECK(run_cli("piterbarg --config " + std::string(TOPOCOV_CONFIGS) + "/piterbarg.ini" + out) == 0);
  CHECK(fs::exists(dir / "piterbarg_summary.csv"));

  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return (dir / name).string();
  };
  CHECK(run_cli("sample --config " + write("bad.ini", "[run]\nseed = 1\n[grid]\nh = -0.25\n") + out) == 2);
  CHECK(run_cli("sample --config " + write("kern.ini", "[run]\nseed = 1\n[kernel]\nname = nope\n") + out) == 3);
  CHECK(run_cli("formula --config " +
                write("overlap.ini", "[run]\nseed = 1\n[events]\nbox1 = 0,2,0,2\nbox2 = 1,3,0,2\n[formula]\n"
                                     "n_lhs = 1000\nwith_lhs = false\n") +
                out) == 4);
  CHECK(run_cli("mixing --config " +
                write("degen.ini", "[run]\nseed = 1\n[kernel]\nname = constant\n[mixing]\nseparations = 1\n"
                                   "n = 100\nn_mc = 10\n") +
                out) == 5);
  CHECK(run_cli("sample" + out) == 2);  // no seed anywhere
  CHECK(run_cli("sample --seed 4 --workers 2" + out) == 0);
  CHECK(run_cli("frobnicate" + out) == 2);
}

TEST_CASE("every subcommand ships an example config") {
  for (const auto& e : experiment_names()) {
    INFO(e);
    auto cfg = load_config(e, std::string(TOPOCOV_CONFIGS) + "/" + e + ".ini");
    CHECK(cfg.seed.has_value());
  }
}
