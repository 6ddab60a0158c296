#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "periodic_harris/commands.hpp"

using namespace periodic_harris;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("periodic_harris_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_tool(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" PERIODIC_HARRIS_TOOL "' " + args + " >out.txt 2>err.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Config, DefaultsAndSections) {
  const auto c = parse_config("");
  EXPECT_EQ(c.model.kind, "cir");
  EXPECT_EQ(c.sim.dt, 0.01);
  EXPECT_EQ(c.lyapunov.replicas, 400u);
  const auto t = parse_config("[model]\nkind = \"toy\"\nc = 2\n[toy]\ntimes = [1, 2.5]\n");
  EXPECT_EQ(t.model.c, 2.0);
  EXPECT_EQ(t.toy.times, (std::vector<double>{1.0, 2.5}));
  EXPECT_TRUE(t.model_spec().is<ToyModel>());
}

TEST(Config, ValidationErrors) {
  try {
    parse_config("[model]\na = 0.5\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("2a > 1"), std::string::npos);
  }
  EXPECT_THROW(parse_config("[sim]\ndt = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[sim]\np = 1.0\n"), ConfigError);
  EXPECT_THROW(parse_config("[sim]\ndt = \"fast\"\n"), ConfigError);
  EXPECT_THROW(parse_config("[sim]\nseeed = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[lyapunov]\nreplicas = 10\n"), ConfigError);
  EXPECT_THROW(parse_config("[model]\nkind = \"lif\"\n"), ConfigError);
  EXPECT_THROW(parse_config("[model\n"), ConfigError);
  EXPECT_THROW(parse_config("[sim]\nx0 = [0, 0.5, 0.5, 0.5, -1]\n"), ConfigError);
  try {
    load_config("/nonexistent/run.toml");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/run.toml"), std::string::npos);
  }
}

TEST(Config, Overrides) {
  const auto c = parse_config("[sim]\nseed = 4\n", {"sim.seed=9", "model.kind=ou", "sim.x0=[1, 0.3, 0.1, 0.6, -2]",
                                                    "spikes.delta=1.5", "output.dir=elsewhere"});
  EXPECT_EQ(c.sim.seed, 9u);
  EXPECT_EQ(c.model.kind, "ou");
  ASSERT_TRUE(c.sim.x0);
  EXPECT_EQ(c.sim.x0->back(), -2.0);
  EXPECT_EQ(c.spikes.delta, 1.5);
  EXPECT_EQ(c.output_dir, "elsewhere");
  EXPECT_THROW(parse_config("", {"noequals"}), ConfigError);
  EXPECT_THROW(parse_config("", {"sim..dt=1"}), ConfigError);
  EXPECT_THROW(parse_config("", {"sim.dt.x=1"}), ConfigError);
}

TEST(Config, HashIsCanonical) {
  const auto a = parse_config("[sim]\nseed = 1\ndt = 0.01\n");
  const auto b = parse_config("[sim]\ndt = 0.01\nseed = 1\n# comment\n");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_NE(config_hash(a), config_hash(parse_config("[sim]\nseed = 2\n")));
  EXPECT_EQ(config_hash(a), config_hash(parse_config("[sim]\nthreads = 3\n")));
  EXPECT_EQ(config_hash(a), config_hash(parse_config("[output]\ndir = \"x\"\n")));
}

TEST(Commands, ReportsCarryTheReproducibilityChain) {
  const auto dir = scratch_dir("header");
  auto c = parse_config("[model]\nkind = \"toy\"\n[toy]\npaths = 200\n", {"output.dir=" + dir.string()});
  std::ostringstream log;
  const auto [out, run] = run_command("toy-validate", c, log);
  EXPECT_EQ(run.parent_path(), dir);
  EXPECT_NE(run.filename().string().find(config_hash(c)), std::string::npos);
  const auto j = nlohmann::json::parse(slurp(run / "report.json"));
  EXPECT_EQ(j["config_hash"], config_hash(c));
  EXPECT_EQ(j["seed"], 1);
  EXPECT_EQ(j["version"], std::string(kVersion));
  EXPECT_EQ(j["table"].size(), 3u);
  EXPECT_TRUE(fs::exists(run / "toy_validate.csv"));
  EXPECT_THROW(run_command("bogus", c, log), ConfigError);
}

TEST(Commands, SameSeedGivesIdenticalOutputs) {
  const auto dir = scratch_dir("determinism");
  const auto c = parse_config("[sim]\nhorizon = 20\nreplicas = 2\nformat = \"both\"\n", {"output.dir=" + dir.string()});
  std::ostringstream log;
  const auto [a, ra] = run_command("simulate", c, log);
  const auto [b, rb] = run_command("simulate", c, log);
  ASSERT_NE(ra, rb);
  for (const char* f : {"path_0.csv", "path_1.csv", "path_0.phpr", "path_1.phpr"}) EXPECT_EQ(slurp(ra / f), slurp(rb / f)) << f;
  auto ja = nlohmann::json::parse(slurp(ra / "report.json"));
  auto jb = nlohmann::json::parse(slurp(rb / "report.json"));
  ja.erase("created");
  jb.erase("created");
  EXPECT_EQ(ja.dump(), jb.dump());
  EXPECT_NE(slurp(ra / "path_0.csv"), slurp(ra / "path_1.csv"));
  EXPECT_EQ(slurp(ra / "path_0.phpr").substr(0, 4), "PHPR");
}

TEST(Commands, HoermanderSummaryAndControlSuite) {
  const auto dir = scratch_dir("hoermander");
  const auto toy = parse_config("[model]\nkind = \"toy\"\n", {"output.dir=" + dir.string()});
  std::ostringstream log;
  const auto h = run_command("hoermander", toy, log);
  EXPECT_TRUE(h.first.passed);
  EXPECT_NE(log.str().find("minimal N = 1"), std::string::npos);

  const auto ou = parse_config("[model]\nkind = \"ou\"\n[control]\nrandom_starts = 3\n", {"output.dir=" + dir.string()});
  const auto k = run_command("control", ou, log);
  EXPECT_TRUE(k.first.passed);
  const auto& runs = k.first.report["runs"];
  ASSERT_EQ(runs.size(), 3u);
  for (const auto& r : runs) {
    EXPECT_LT(r["terminal_distance"].get<double>(), 1e-2);
    EXPECT_TRUE(r["t1"].is_number());
    EXPECT_TRUE(r["t2"].is_null());  // no positivity phase for OU
    EXPECT_TRUE(r["t4"].is_number());
  }
  EXPECT_TRUE(k.first.report["constants"].contains("K"));
  EXPECT_TRUE(fs::exists(k.second / "control_2.csv"));
}

TEST(Commands, LyapunovAndIsiOutputs) {
  const auto dir = scratch_dir("lyapunov");
  std::ostringstream log;
  const auto c = parse_config("[lyapunov]\nreplicas = 100\n", {"output.dir=" + dir.string()});
  const auto [l, rl] = run_command("lyapunov", c, log);
  EXPECT_EQ(l.report["points"].size(), 20u);
  EXPECT_EQ(l.report["T"], 10.0);
  EXPECT_TRUE(fs::exists(rl / "drift.csv"));

  const auto hh = parse_config("[model]\nkind = \"hh\"\n[spikes]\ntotal_isis = 20\nblock = 5\nmax_time = 2000\n"
                               "checkpoint_base = 50\n",
                               {"output.dir=" + dir.string()});
  const auto [s, rs] = run_command("isi", hh, log);
  EXPECT_TRUE(s.report["complete"].get<bool>());
  EXPECT_TRUE(s.report["checks"]["count_growth"].get<bool>());
  EXPECT_TRUE(s.report["checks"]["spike_free_window"].get<bool>());
  EXPECT_TRUE(fs::exists(rs / "spikes_0.csv"));
  EXPECT_TRUE(fs::exists(rs / "cdf.csv"));
}

TEST(Executable, ExitCodes) {
  const auto dir = scratch_dir("exit");
  write_file(dir / "toy.toml", "[model]\nkind = \"toy\"\n[toy]\npaths = 500\n");
  write_file(dir / "toy2.toml", "[model]\nkind = \"toy\"\nc = 2.0\n[hoermander]\nmax_depth = 1\nextra_times = [0.16666666666666666]\n");
  write_file(dir / "bad.toml", "[output]\ndir = \"/proc/periodic_harris_forbidden\"\n");

  EXPECT_EQ(run_tool("toy-validate --config toy.toml", dir), 0);
  EXPECT_NE(slurp(dir / "out.txt").find("PASS"), std::string::npos);
  EXPECT_EQ(run_tool("simulate --config missing.toml", dir), 2);
  EXPECT_NE(slurp(dir / "err.txt").find("missing.toml"), std::string::npos);
  EXPECT_EQ(run_tool("simulate --config toy.toml --set model.kind=cir --set model.a=0.5", dir), 2);
  EXPECT_NE(slurp(dir / "err.txt").find("2a > 1"), std::string::npos);
  EXPECT_EQ(run_tool("frobnicate --config toy.toml", dir), 2);
  EXPECT_EQ(run_tool("hoermander --config toy2.toml", dir), 1);
  EXPECT_EQ(run_tool("simulate --config bad.toml", dir), 3);
}
