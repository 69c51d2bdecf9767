#include <gtest/gtest.h>

#include <filesystem>
#include <cstring>
#include <random>
#include <sstream>

#include <lyapnet/dataset_io.hpp>
#include <lyapnet/model_io.hpp>

using namespace lyapnet;
namespace fs = std::filesystem;

namespace {

DatasetFile random_dataset(std::mt19937_64& gen, std::size_t n, std::size_t len = 1000) {
  std::uniform_real_distribution<double> u(-5, 5);
  DatasetFile ds;
  ds.system = gen() % 2 ? SystemKind::Lorenz : SystemKind::CoupledLorenz;
  ds.profile = static_cast<Profile>(gen() % 3);
  for (std::size_t i = 0; i < n; ++i) {
    LabeledSample s;
    s.params = {u(gen), u(gen), u(gen), u(gen), u(gen)};
    for (int k = 0; k < system_dim(ds.system); ++k) s.le_truth.push_back(u(gen));
    for (std::size_t j = 0; j < len; ++j) s.series.push_back(u(gen));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::string bytes_of(const DatasetFile& ds) {
  std::ostringstream os;
  write_dataset(os, ds);
  return os.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("lyapnet_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(DatasetFormat, RoundTrip) {
  std::mt19937_64 gen(1);
  for (int i = 0; i < 100; ++i) {
    const auto ds = random_dataset(gen, gen() % 4, 1 + gen() % 50);
    std::istringstream is(bytes_of(ds));
    EXPECT_EQ(read_dataset(is), ds);
  }
}

TEST(DatasetFormat, HeaderLayout) {
  std::mt19937_64 gen(2);
  auto ds = random_dataset(gen, 2, 10);
  ds.system = SystemKind::Lorenz;
  for (auto& s : ds.samples) s.le_truth.resize(3);
  const auto b = bytes_of(ds);
  EXPECT_EQ(b.substr(0, 4), "LYDS");
  EXPECT_EQ(b.size(), 4u + 4 + 1 + 4 + 4 + 4 + 1 + 2 * (5 + 3 + 10) * 8);
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 0u);  // system id
  EXPECT_EQ(static_cast<unsigned char>(b[9]), 2u);  // sample count, little-endian
}

TEST(DatasetFormat, EveryTruncationFails) {
  std::mt19937_64 gen(3);
  const auto b = bytes_of(random_dataset(gen, 2, 5));
  for (std::size_t n = 0; n < b.size(); ++n) {
    std::istringstream is(b.substr(0, n));
    EXPECT_THROW(read_dataset(is), FormatError) << n;
  }
}

TEST(DatasetFormat, CorruptHeaders) {
  std::mt19937_64 gen(4);
  auto ds = random_dataset(gen, 1, 5);
  ds.system = SystemKind::Lorenz;
  ds.samples[0].le_truth.resize(3);
  const auto good = bytes_of(ds);
  const auto fails = [](std::string b) {
    std::istringstream is(b);
    EXPECT_THROW(read_dataset(is), FormatError);
  };
  auto b = good;
  b[0] = 'X';
  fails(b);
  b = good;
  b[4] = 9;  // version
  fails(b);
  b = good;
  b[8] = 7;  // system id
  fails(b);
  b = good;
  b[17] = 6;  // n_les disagrees with the system
  fails(b);
  b = good;
  b[21] = 5;  // profile id
  fails(b);
  b = good;
  b[9] = static_cast<char>(0xFF);  // sample count larger than the payload
  fails(b);
  b = good;
  b[13] = static_cast<char>(0xFF);  // series length
  b[14] = static_cast<char>(0xFF);
  b[15] = static_cast<char>(0xFF);
  b[16] = static_cast<char>(0x7F);
  fails(b);
  fails(good + "x");
}

TEST(DatasetFormat, RandomBytesNeverCrash) {
  std::mt19937_64 gen(5);
  const auto good = bytes_of(random_dataset(gen, 3, 8));
  for (int i = 0; i < 500; ++i) {
    auto b = good;
    for (int k = 0; k < 3; ++k) b[gen() % 22] = static_cast<char>(gen());
    std::istringstream is(b);
    try {
      read_dataset(is);
    } catch (const FormatError&) {
    }
  }
}

TEST(DatasetFormat, WriterRejectsRaggedSamples) {
  std::mt19937_64 gen(6);
  auto ds = random_dataset(gen, 2, 5);
  ds.samples[1].series.push_back(0.0);
  std::ostringstream os;
  EXPECT_THROW(write_dataset(os, ds), ContractViolation);
}

TEST(DatasetFiles, SaveLoadAndPartialCleanup) {
  const auto dir = scratch("dataset");
  std::mt19937_64 gen(7);
  const auto ds = random_dataset(gen, 3);
  save_dataset(dir / "a.lyds", ds);
  EXPECT_EQ(load_dataset(dir / "a.lyds"), ds);
  EXPECT_FALSE(fs::exists(dir / "a.lyds.partial"));
  auto bad = ds;
  bad.samples[0].series.pop_back();
  EXPECT_THROW(save_dataset(dir / "b.lyds", bad), ContractViolation);
  EXPECT_FALSE(fs::exists(dir / "b.lyds"));
  EXPECT_FALSE(fs::exists(dir / "b.lyds.partial"));
  EXPECT_THROW(load_dataset(dir / "missing.lyds"), Error);
}

TEST(Splits, DirectoryRoundTrip) {
  const auto dir = scratch("splits");
  std::mt19937_64 gen(8);
  DatasetSplits s;
  s.system = SystemKind::Lorenz;
  s.seed = 77;
  auto ds = random_dataset(gen, 6);
  for (auto& x : ds.samples) x.le_truth.resize(3);
  s.train.assign(ds.samples.begin(), ds.samples.begin() + 3);
  s.val.assign(ds.samples.begin() + 3, ds.samples.begin() + 5);
  s.test.assign(ds.samples.begin() + 5, ds.samples.end());
  save_splits(dir, s, {{"regime", "random"}});
  const auto kv = load_key_values(dir / split_files::manifest);
  EXPECT_EQ(kv.at("seed"), "77");
  EXPECT_EQ(kv.at("regime"), "random");
  const auto back = load_splits(dir);
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.val, s.val);
  EXPECT_EQ(back.test, s.test);
  EXPECT_EQ(back.seed, 77u);
}

TEST(KeyValues, Parse) {
  std::istringstream is("# comment\n system = lorenz \n\nseed=7 # trailing\n");
  const auto kv = parse_key_values(is, "cfg");
  EXPECT_EQ(kv.at("system"), "lorenz");
  EXPECT_EQ(kv.at("seed"), "7");
  std::istringstream bad("no equals sign\n");
  EXPECT_THROW(parse_key_values(bad, "cfg"), FormatError);
}

TEST(ModelFormat, RoundTrip) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> n(0, 1);
  for (int i = 0; i < 100; ++i) {
    Architecture a = Architecture::for_system(i % 2 ? SystemKind::Lorenz : SystemKind::CoupledLorenz);
    if (i % 5 == 0) a.conv1.kernel = 1 + static_cast<int>(gen() % 7);
    ModelParams p(a);
    for (auto& v : p.values()) v = n(gen);
    std::stringstream ss;
    write_model(ss, p);
    EXPECT_EQ(read_model(ss), p);
  }
}

TEST(ModelFormat, Errors) {
  const auto p = init_params(Architecture{}, 1);
  std::ostringstream os;
  write_model(os, p);
  const auto good = os.str();
  for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{10}, std::size_t{40}, good.size() - 1}) {
    std::istringstream is(good.substr(0, n));
    EXPECT_THROW(read_model(is), FormatError) << n;
  }
  {
    std::istringstream is(good);
    EXPECT_THROW(read_model(is, "m", 6), FormatError);
  }
  auto b = good;
  b[0] = 'Z';
  std::istringstream is(b);
  EXPECT_THROW(read_model(is), FormatError);
  b = good;
  b[20] = 99;  // conv1 kernel no longer matches the parameter count
  std::istringstream is2(b);
  EXPECT_THROW(read_model(is2), FormatError);
  b = good;
  std::memset(b.data() + b.size() - 8, 0xFF, 8);  // NaN parameter
  std::istringstream is3(b);
  EXPECT_THROW(read_model(is3), FormatError);
}

TEST(ModelFiles, SaveLoad) {
  const auto dir = scratch("model");
  const auto p = init_params(Architecture::for_system(SystemKind::CoupledLorenz), 3);
  save_model(dir / "m.lynn", p);
  EXPECT_EQ(load_model(dir / "m.lynn", 6), p);
  EXPECT_THROW(load_model(dir / "m.lynn", 3), FormatError);
}
