#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <lyapnet/dataset_io.hpp>
#include <lyapnet/sweep.hpp>

namespace fs = std::filesystem;

namespace {

// Per-test scratch directory, so tests can run in parallel.
fs::path kWork;

int run(const std::string& args) {
  const std::string cmd = std::string(LYAPNET_CLI) + " -q --root " + kWork.string() + " " + args + " > " +
                          (kWork / "last.log").string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string last_log() {
  std::ifstream is(kWork / "last.log");
  return {std::istreambuf_iterator<char>(is), {}};
}

std::size_t data_rows(const fs::path& csv) {
  std::ifstream is(csv);
  std::string line;
  std::size_t n = 0;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    ++n;
  }
  return n;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    kWork = fs::temp_directory_path() / "lyapnet_cli_test" /
            ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

const char* kGen = "gen-data --system lorenz --regime random --profile desk --seed 7 --transient 20 --measure 100 "
                   "--pool 40 --n-train 16 --n-val 6 --n-test 6";

}  // namespace

TEST_F(Cli, EndToEnd) {
  ASSERT_EQ(run(kGen), 0) << last_log();
  const fs::path data = kWork / "data" / "lorenz-random-desk";
  for (const char* f : {"train.lyds", "val.lyds", "test.lyds", "manifest.txt"}) EXPECT_TRUE(fs::exists(data / f)) << f;
  const auto kv = lyapnet::load_key_values(data / "manifest.txt");
  EXPECT_EQ(kv.at("seed"), "7");
  EXPECT_EQ(kv.at("profile"), "custom");
  EXPECT_FALSE(fs::exists(data.string() + ".lock"));

  ASSERT_EQ(run("train --data " + data.string() + " --epochs 3 --models 10 --batch 8"), 0) << last_log();
  const fs::path models = kWork / "models" / "lorenz-random-desk";
  for (int i = 0; i < 10; ++i) EXPECT_TRUE(fs::exists(models / ("model_0" + std::to_string(i) + ".lynn")));
  EXPECT_EQ(data_rows(models / "history.csv"), 30u);
  EXPECT_EQ(lyapnet::load_key_values(models / "manifest.txt").at("model_seeds"), "1,2,3,4,5,6,7,8,9,10");

  ASSERT_EQ(run("predict-sweep --models " + models.string() + " --plane 4x3 --out " + (kWork / "p.csv").string()), 0)
      << last_log();
  EXPECT_EQ(data_rows(kWork / "p.csv"), 12u);

  const std::string grid = " --line 3 --r-lo 0.5 --r-hi 30 --b 2.2 ";
  ASSERT_EQ(run("classical-sweep --system lorenz" + grid + "--out " + (kWork / "c.csv").string()), 0) << last_log();
  ASSERT_EQ(run("predict-sweep --models " + models.string() + grid + "--truth " + (kWork / "c.csv").string() +
                " --out " + (kWork / "pl.csv").string()),
            0)
      << last_log();
  const auto merged = lyapnet::load_sweep_csv(kWork / "pl.csv");
  EXPECT_TRUE(merged.has_truth);
  EXPECT_TRUE(merged.huber.has_value());

  ASSERT_EQ(run("error-analysis --sweep " + (kWork / "pl.csv").string()), 0) << last_log();
  EXPECT_EQ(data_rows(kWork / "pl.csv.hist.csv"), 3u * 5 * 4);
  // Without truth the command must say where truth comes from.
  EXPECT_NE(run("error-analysis --sweep " + (kWork / "p.csv").string()), 0);
  EXPECT_NE(last_log().find("classical-sweep"), std::string::npos);

  ASSERT_EQ(run("report --models " + models.string() + " --data " + data.string() + " --sweep " +
                (kWork / "pl.csv").string()),
            0)
      << last_log();
  EXPECT_NE(last_log().find("test Huber"), std::string::npos);
  EXPECT_TRUE(fs::exists(models / "report.txt"));
}

TEST_F(Cli, ConfigFileAndOverrides) {
  {
    std::ofstream cfg(kWork / "run.ini");
    cfg << "[gen-data]\nsystem = lorenz\nregime = random\nseed = 3\ntransient = 20\nmeasure = 100\npool = 30\n"
           "n-train = 10\nn-val = 4\nn-test = 4\nout = " << (kWork / "cfgdata").string() << "\n";
  }
  ASSERT_EQ(run("--config " + (kWork / "run.ini").string() + " gen-data --seed 5"), 0) << last_log();
  const auto kv = lyapnet::load_key_values(kWork / "cfgdata" / "manifest.txt");
  EXPECT_EQ(kv.at("seed"), "5");
  EXPECT_EQ(kv.at("n_train"), "10");
}

TEST_F(Cli, MissingInputsNameTheProducer) {
  EXPECT_NE(run("train --data " + (kWork / "nowhere").string()), 0);
  EXPECT_NE(last_log().find("gen-data"), std::string::npos);
  EXPECT_NE(run("predict-sweep --models " + (kWork / "nowhere").string() + " --line 3"), 0);
  EXPECT_NE(last_log().find("`lyapnet train`"), std::string::npos);
}

TEST_F(Cli, FailureLeavesNoPartialOutput) {
  const fs::path out = kWork / "short";
  // 5 draws cannot fill 20 samples: the command fails and cleans up.
  EXPECT_NE(run("gen-data --transient 10 --measure 100 --pool 5 --n-train 10 --n-val 5 --n-test 5 --out " +
                out.string()),
            0);
  EXPECT_NE(last_log().find("distinct samples"), std::string::npos);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_FALSE(fs::exists(out.string() + ".partial"));
  EXPECT_FALSE(fs::exists(out.string() + ".lock"));
}

TEST_F(Cli, LockBlocksConcurrentWriters) {
  const fs::path out = kWork / "locked";
  { std::ofstream(out.string() + ".lock") << "123\n"; }
  EXPECT_NE(run("gen-data --transient 10 --measure 100 --pool 10 --n-train 2 --n-val 1 --n-test 1 --out " +
                out.string()),
            0);
  EXPECT_NE(last_log().find("in use"), std::string::npos);
  fs::remove(out.string() + ".lock");
}

TEST_F(Cli, BadArguments) {
  EXPECT_NE(run("predict-sweep --models x --line 3 --plane 3x3"), 0);
  EXPECT_NE(run("gen-data --system rossler"), 0);
  EXPECT_NE(run(""), 0);
}
