#pragma once

// Dataset file ("LYDS", little-endian):
//   magic "LYDS" | version u32 | system id u8 | n_samples u32 | series_len u32
//   | n_les u32 | profile id u8
//   then per sample: sigma, r, b, lambda1, lambda2 (f64) | le_truth (n_les f64)
//   | series (series_len f64)
//
// A split directory holds train.lyds, val.lyds, test.lyds and manifest.txt.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "lyapnet/binary_io.hpp"
#include "lyapnet/pipeline.hpp"

namespace lyapnet {

inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetFile {
  SystemKind system = SystemKind::Lorenz;
  Profile profile = Profile::Desk;
  std::vector<LabeledSample> samples;

  friend bool operator==(const DatasetFile&, const DatasetFile&) = default;
};

inline void write_dataset(std::ostream& os, const DatasetFile& ds) {
  const auto n_les = static_cast<std::uint32_t>(system_dim(ds.system));
  const auto len = static_cast<std::uint32_t>(ds.samples.empty() ? kSeriesLength : ds.samples.front().series.size());
  for (const auto& s : ds.samples) {
    require(s.series.size() == len, "all series in a dataset must have the same length");
    require(s.le_truth.size() == n_les, "sample has ", s.le_truth.size(), " exponents, system needs ", n_les);
  }
  binio::put_magic(os, "LYDS");
  binio::put_uint<std::uint32_t>(os, kDatasetVersion);
  binio::put_uint<std::uint8_t>(os, static_cast<std::uint8_t>(ds.system));
  binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(ds.samples.size()));
  binio::put_uint<std::uint32_t>(os, len);
  binio::put_uint<std::uint32_t>(os, n_les);
  binio::put_uint<std::uint8_t>(os, static_cast<std::uint8_t>(ds.profile));
  for (const auto& s : ds.samples) {
    for (double v : {s.params.sigma, s.params.r, s.params.b, s.params.lambda1, s.params.lambda2}) binio::put_f64(os, v);
    for (double v : s.le_truth) binio::put_f64(os, v);
    for (double v : s.series) binio::put_f64(os, v);
  }
}

inline DatasetFile read_dataset(std::istream& is, const std::string& source = "<dataset>") {
  binio::Reader in(is, source);
  in.expect_magic("LYDS");
  const auto version = in.get_uint<std::uint32_t>("version");
  if (version != kDatasetVersion) in.fail(detail::concat("unsupported dataset version ", version));
  const auto system = in.get_uint<std::uint8_t>("system id");
  if (system > 1) in.fail(detail::concat("unknown system id ", +system));
  DatasetFile ds;
  ds.system = static_cast<SystemKind>(system);
  const auto n = in.get_uint<std::uint32_t>("sample count");
  const auto len = in.get_uint<std::uint32_t>("series length");
  const auto n_les = in.get_uint<std::uint32_t>("exponent count");
  if (n_les != static_cast<std::uint32_t>(system_dim(ds.system))) {
    in.fail(detail::concat("exponent count ", n_les, " does not match system dimension ", system_dim(ds.system)));
  }
  if (len == 0 || len > (1u << 24)) in.fail(detail::concat("implausible series length ", len));
  const auto profile = in.get_uint<std::uint8_t>("profile id");
  if (profile > 2) in.fail(detail::concat("unknown profile id ", +profile));
  ds.profile = static_cast<Profile>(profile);
  ds.samples.reserve(std::min<std::uint32_t>(n, 1u << 20));
  for (std::uint32_t i = 0; i < n; ++i) {
    LabeledSample s;
    s.params.sigma = in.get_f64("params");
    s.params.r = in.get_f64("params");
    s.params.b = in.get_f64("params");
    s.params.lambda1 = in.get_f64("params");
    s.params.lambda2 = in.get_f64("params");
    s.le_truth.resize(n_les);
    for (auto& v : s.le_truth) v = in.get_f64("exponents");
    s.series.resize(len);
    for (auto& v : s.series) v = in.get_f64("series");
    ds.samples.push_back(std::move(s));
  }
  in.expect_end();
  return ds;
}

inline void save_dataset(const std::filesystem::path& path, const DatasetFile& ds) {
  binio::atomic_write(path, [&](std::ostream& os) { write_dataset(os, ds); });
}

inline DatasetFile load_dataset(const std::filesystem::path& path) {
  auto is = binio::open_input(path);
  return read_dataset(is, path.string());
}

/// Plain `key = value` text, one entry per line; '#' starts a comment.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& is, const std::string& source) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(detail::concat(source, ":", lineno, ": expected key = value"));
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(detail::concat("cannot open ", path.string()));
  return parse_key_values(is, path.string());
}

inline void save_key_values(const std::filesystem::path& path, const KeyValues& kv, std::string_view header = {}) {
  binio::atomic_write(
      path,
      [&](std::ostream& os) {
        if (!header.empty()) os << "# " << header << "\n";
        for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
      },
      std::ios::out);
}

namespace split_files {
inline constexpr const char* train = "train.lyds";
inline constexpr const char* val = "val.lyds";
inline constexpr const char* test = "test.lyds";
inline constexpr const char* manifest = "manifest.txt";
}  // namespace split_files

inline void save_splits(const std::filesystem::path& dir, const DatasetSplits& splits, const KeyValues& extra = {}) {
  std::filesystem::create_directories(dir);
  const auto save = [&](const char* name, const std::vector<LabeledSample>& samples) {
    save_dataset(dir / name, DatasetFile{splits.system, splits.profile, samples});
  };
  save(split_files::train, splits.train);
  save(split_files::val, splits.val);
  save(split_files::test, splits.test);
  KeyValues kv = extra;
  kv["system"] = std::string(to_string(splits.system));
  kv["profile"] = std::string(to_string(splits.profile));
  kv["seed"] = std::to_string(splits.seed);
  kv["n_train"] = std::to_string(splits.train.size());
  kv["n_val"] = std::to_string(splits.val.size());
  kv["n_test"] = std::to_string(splits.test.size());
  kv["batch_train"] = std::to_string(splits.batch_train);
  kv["batch_eval"] = std::to_string(splits.batch_eval);
  save_key_values(dir / split_files::manifest, kv, "lyapnet dataset manifest");
}

inline DatasetSplits load_splits(const std::filesystem::path& dir) {
  const auto kv = load_key_values(dir / split_files::manifest);
  const auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(detail::concat((dir / split_files::manifest).string(), ": missing key ", key));
    return it->second;
  };
  DatasetSplits s;
  s.seed = std::stoull(get("seed"));
  s.batch_train = std::stoi(get("batch_train"));
  s.batch_eval = std::stoi(get("batch_eval"));
  auto train = load_dataset(dir / split_files::train);
  auto val = load_dataset(dir / split_files::val);
  auto test = load_dataset(dir / split_files::test);
  if (train.system != val.system || train.system != test.system) {
    throw FormatError(detail::concat(dir.string(), ": splits disagree on the system"));
  }
  s.system = train.system;
  s.profile = train.profile;
  s.train = std::move(train.samples);
  s.val = std::move(val.samples);
  s.test = std::move(test.samples);
  if (parse_system(get("system")) != s.system) throw FormatError(detail::concat(dir.string(), ": manifest system mismatch"));
  return s;
}

}  // namespace lyapnet
