#pragma once

// Ensemble inference over r-lines and (r, b)-planes, the classical baseline
// on the same grids, and binned absolute-error tables.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lyapnet/binary_io.hpp"
#include "lyapnet/cnn.hpp"
#include "lyapnet/dynsys.hpp"
#include "lyapnet/lyapunov.hpp"
#include "lyapnet/parallel.hpp"
#include "lyapnet/pipeline.hpp"

namespace lyapnet {

enum class GridKind { Line, Plane };

/// n points from lo to hi inclusive, exactly equidistant.
inline std::vector<double> linspace(double lo, double hi, int n) {
  require(n >= 2, "a grid axis needs at least two points");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  v.back() = hi;
  return v;
}

struct GridSpec {
  GridKind kind = GridKind::Line;
  double r_lo = 0.0, r_hi = 300.0;
  int r_count = 6000;
  /// Line: b_lo is the fixed b. Plane: b axis from b_lo to b_hi.
  double b_lo = 2.2, b_hi = 2.2;
  int b_count = 1;
  double sigma = 10.0;

  static GridSpec line(double r_lo, double r_hi, int count, double b, double sigma = 10.0) {
    return {GridKind::Line, r_lo, r_hi, count, b, b, 1, sigma};
  }
  static GridSpec plane(double r_lo, double r_hi, int r_count, double b_lo, double b_hi, int b_count,
                        double sigma = 10.0) {
    return {GridKind::Plane, r_lo, r_hi, r_count, b_lo, b_hi, b_count, sigma};
  }

  std::size_t size() const { return static_cast<std::size_t>(r_count) * static_cast<std::size_t>(b_count); }

  void validate() const {
    require(r_count >= 2 && r_lo < r_hi, "r axis needs >= 2 points over an increasing range");
    if (kind == GridKind::Plane) {
      require(b_count >= 2 && b_lo < b_hi, "b axis needs >= 2 points over an increasing range");
    } else {
      require(b_count == 1, "a line has a single b value");
    }
    require(b_lo > 0.0, "b must be positive");
  }

  /// Grid points in row-major order: b is the row (outer) index, r the column.
  std::vector<SystemParams> points() const {
    validate();
    const auto rs = linspace(r_lo, r_hi, r_count);
    const std::vector<double> bs = kind == GridKind::Plane ? linspace(b_lo, b_hi, b_count) : std::vector<double>{b_lo};
    std::vector<SystemParams> out;
    out.reserve(size());
    for (double b : bs) {
      for (double r : rs) {
        SystemParams p;
        p.sigma = sigma;
        p.r = r;
        p.b = b;
        out.push_back(p);
      }
    }
    return out;
  }
};

struct EnsemblePrediction {
  std::vector<double> mean;
  std::vector<double> std;
  /// members[m][k]: output k of model m.
  std::vector<std::vector<double>> members;
};

/// Per-output mean and population standard deviation over the models.
inline EnsemblePrediction predict_ensemble(std::span<const ModelParams> models, std::span<const double> series) {
  require(!models.empty(), "ensemble needs at least one model");
  const int n_out = models.front().arch().n_outputs;
  EnsemblePrediction e;
  for (const auto& m : models) {
    require(m.arch().n_outputs == n_out, "ensemble members disagree on the number of outputs");
    e.members.push_back(forward(m, series));
  }
  const auto n = static_cast<double>(models.size());
  e.mean.assign(static_cast<std::size_t>(n_out), 0.0);
  e.std.assign(static_cast<std::size_t>(n_out), 0.0);
  // Sums are taken relative to the first member, so identical members give
  // exactly their common value and a zero spread.
  for (std::size_t k = 0; k < e.mean.size(); ++k) {
    const double ref = e.members.front()[k];
    double sum = 0.0;
    for (const auto& p : e.members) sum += p[k] - ref;
    const double shift = sum / n;
    double var = 0.0;
    for (const auto& p : e.members) var += (p[k] - ref - shift) * (p[k] - ref - shift);
    e.mean[k] = ref + shift;
    e.std[k] = std::sqrt(var / n);
  }
  return e;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(std::span<const double> v) {
  require(!v.empty(), "mean_std of an empty set");
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

struct SweepRow {
  SystemParams params;
  bool ok = true;
  std::string error;
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<std::vector<double>> members;
  std::optional<LEVector> truth;
};

struct SweepResult {
  GridSpec grid;
  SystemKind system = SystemKind::Lorenz;
  int n_les = 3;
  bool has_predictions = false;
  bool has_truth = false;
  std::vector<SweepRow> rows;
  /// Huber loss of each model against the classical truth, as mean +- std
  /// over the ensemble; set when both predictions and truth are present.
  std::optional<MeanStd> huber;
  std::vector<double> huber_per_model;
};

struct SweepOptions {
  bool with_classical = false;
  LEConfig classical = LEConfig::desk();
  unsigned jobs = 0;
  /// Seed for the constant-series fill values.
  std::uint64_t fill_seed = 0;
  double delta = 0.6;
  bool verbose = false;
};

/// Positive-exponent threshold used for chaos / hyperchaos flags.
inline constexpr double kPositiveLE = 0.01;

enum class Dynamics { Regular, Chaotic, Hyperchaotic };

inline Dynamics classify(std::span<const double> les, double threshold = kPositiveLE) {
  require(les.size() >= 2, "classification needs at least two exponents");
  if (les[0] > threshold && les[1] > threshold) return Dynamics::Hyperchaotic;
  if (les[0] > threshold) return Dynamics::Chaotic;
  return Dynamics::Regular;
}

namespace detail {

inline SweepResult run_sweep(std::span<const ModelParams> models, const GridSpec& grid, SystemKind system,
                             const SweepOptions& opt, bool predict) {
  const auto points = grid.points();
  SweepResult res;
  res.grid = grid;
  res.system = system;
  res.n_les = system_dim(system);
  res.has_predictions = predict;
  res.has_truth = opt.with_classical;
  if (predict) {
    require(!models.empty(), "prediction sweep needs at least one model");
    for (const auto& m : models) {
      require(m.arch().n_outputs == res.n_les, "model predicts ", m.arch().n_outputs, " exponents, ",
              to_string(system), " has ", res.n_les);
    }
  }
  res.rows.resize(points.size());
  const CounterRng rng(opt.fill_seed);
  std::atomic<std::size_t> done{0};
  parallel_for(points.size(), opt.jobs, [&](std::size_t i) {
    SweepRow& row = res.rows[i];
    row.params = points[i];
    try {
      if (predict) {
        const auto series = generate_prediction_series(system, row.params, rng, i);
        auto e = predict_ensemble(models, series);
        row.mean = std::move(e.mean);
        row.std = std::move(e.std);
        row.members = std::move(e.members);
      }
      if (opt.with_classical) {
        const SystemSpec spec{system, row.params};
        row.truth = benettin_spectrum(spec, default_initial_state(system), opt.classical).first;
      }
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
      row.truth.reset();
      std::cerr << "lyapnet: grid point r=" << row.params.r << " b=" << row.params.b << " failed: " << e.what() << "\n";
    }
    const std::size_t d = ++done;
    if (opt.verbose && (d % 100 == 0 || d == points.size())) std::cerr << "  swept " << d << "/" << points.size() << "\n";
  });

  if (predict && opt.with_classical) {
    std::vector<double> per_model;
    for (std::size_t m = 0; m < models.size(); ++m) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& row : res.rows) {
        if (!row.ok) continue;
        for (int k = 0; k < res.n_les; ++k) {
          sum += huber_term(row.members[m][static_cast<std::size_t>(k)] - (*row.truth)[static_cast<std::size_t>(k)],
                            opt.delta);
          ++count;
        }
      }
      if (count > 0) per_model.push_back(sum / static_cast<double>(count));
    }
    if (!per_model.empty()) {
      res.huber = mean_std(per_model);
      res.huber_per_model = std::move(per_model);
    }
  }
  return res;
}

}  // namespace detail

/// Ensemble prediction (and optionally classical truth) along an r-line.
/// Failed grid points are kept as rows with ok = false.
inline SweepResult sweep_line(std::span<const ModelParams> models, const GridSpec& grid, SystemKind system,
                              const SweepOptions& opt = {}) {
  require(grid.kind == GridKind::Line, "sweep_line needs a line grid");
  return detail::run_sweep(models, grid, system, opt, true);
}

/// Same as sweep_line over a row-major (r, b) plane.
inline SweepResult sweep_plane(std::span<const ModelParams> models, const GridSpec& grid, SystemKind system,
                               const SweepOptions& opt = {}) {
  require(grid.kind == GridKind::Plane, "sweep_plane needs a plane grid");
  return detail::run_sweep(models, grid, system, opt, true);
}

/// Classical spectra only, on any grid.
inline SweepResult classical_sweep(const GridSpec& grid, SystemKind system, SweepOptions opt = {}) {
  opt.with_classical = true;
  return detail::run_sweep({}, grid, system, opt, false);
}

// ---------------------------------------------------------------------------
// Error analysis

/// Absolute-error bins: [0, 0.05], (0.05, 0.1], (0.1, 0.5], (0.5, inf).
inline constexpr std::array<double, 3> kErrorEdges = {0.05, 0.1, 0.5};
inline constexpr std::array<const char*, 4> kErrorBinLabels = {"[0,0.05]", "(0.05,0.1]", "(0.1,0.5]", "(0.5,inf)"};

inline int error_bin(double abs_error) {
  for (std::size_t i = 0; i < kErrorEdges.size(); ++i) {
    if (abs_error <= kErrorEdges[i]) return static_cast<int>(i);
  }
  return static_cast<int>(kErrorEdges.size());
}

inline std::vector<double> default_truth_edges() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {-inf, -0.4, -0.05, 0.05, 0.5, inf};
}

struct HistogramRow {
  int le_index = 1;  // 1-based
  double truth_lo = 0.0;
  double truth_hi = 0.0;
  int error_bin = 0;
  double percent = 0.0;
  /// Points in this truth bin (same for all four error bins of the bin).
  std::size_t count = 0;
};

struct ErrorHistogram {
  std::vector<double> truth_edges;
  std::vector<HistogramRow> rows;
};

/// For each exponent: group grid points by their classical value into
/// [edge_k, edge_k+1) and report the share of points per error bin of
/// |ensemble mean - truth|. Empty truth bins produce zero rows with count 0.
inline ErrorHistogram error_histogram(const SweepResult& res, std::vector<double> truth_edges = default_truth_edges()) {
  require(res.has_truth && res.has_predictions, "error histogram needs predictions and classical truth");
  require(truth_edges.size() >= 2, "need at least two truth-bin edges");
  for (std::size_t i = 1; i < truth_edges.size(); ++i) require(truth_edges[i - 1] < truth_edges[i], "truth-bin edges must increase");
  const std::size_t n_bins = truth_edges.size() - 1;
  ErrorHistogram h;
  h.truth_edges = truth_edges;
  for (int k = 0; k < res.n_les; ++k) {
    std::vector<std::array<std::size_t, 4>> tally(n_bins, {0, 0, 0, 0});
    for (const auto& row : res.rows) {
      if (!row.ok || !row.truth) continue;
      const double t = (*row.truth)[static_cast<std::size_t>(k)];
      const double err = std::abs(row.mean[static_cast<std::size_t>(k)] - t);
      for (std::size_t b = 0; b < n_bins; ++b) {
        if (t >= truth_edges[b] && t < truth_edges[b + 1]) {
          ++tally[b][static_cast<std::size_t>(error_bin(err))];
          break;
        }
      }
    }
    for (std::size_t b = 0; b < n_bins; ++b) {
      std::size_t total = 0;
      for (auto c : tally[b]) total += c;
      for (int e = 0; e < 4; ++e) {
        HistogramRow r;
        r.le_index = k + 1;
        r.truth_lo = truth_edges[b];
        r.truth_hi = truth_edges[b + 1];
        r.error_bin = e;
        r.count = total;
        r.percent = total ? 100.0 * static_cast<double>(tally[b][static_cast<std::size_t>(e)]) / static_cast<double>(total) : 0.0;
        h.rows.push_back(r);
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw FormatError(concat("bad number '", s, "'"));
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace detail

/// Header comment lines carry the grid and system so the file can be read
/// back without side information. Failed cells are written as nan.
inline void write_sweep_csv(std::ostream& os, const SweepResult& res) {
  const auto& g = res.grid;
  os << "# system=" << to_string(res.system) << " kind=" << (g.kind == GridKind::Line ? "line" : "plane")
     << " r_lo=" << detail::fmt_double(g.r_lo) << " r_hi=" << detail::fmt_double(g.r_hi) << " r_count=" << g.r_count
     << " b_lo=" << detail::fmt_double(g.b_lo) << " b_hi=" << detail::fmt_double(g.b_hi) << " b_count=" << g.b_count
     << " sigma=" << detail::fmt_double(g.sigma) << "\n";
  os << "# order=row-major (b outer, r inner): row index = i_b * r_count + i_r\n";
  if (res.huber) {
    os << "# huber_vs_classical=" << detail::fmt_double(res.huber->mean) << " +- " << detail::fmt_double(res.huber->std)
       << "\n";
  }
  os << "r,b,sigma";
  const int n = res.n_les;
  if (res.has_predictions) {
    for (int k = 1; k <= n; ++k) os << ",le_pred_mean_" << k;
    for (int k = 1; k <= n; ++k) os << ",le_pred_std_" << k;
  }
  if (res.has_truth) {
    for (int k = 1; k <= n; ++k) os << ",le_true_" << k;
  }
  os << "\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& row : res.rows) {
    os << detail::fmt_double(row.params.r) << ',' << detail::fmt_double(row.params.b) << ','
       << detail::fmt_double(row.params.sigma);
    const auto cols = [&](const std::vector<double>& v) {
      for (int k = 0; k < n; ++k) os << ',' << detail::fmt_double(row.ok ? v[static_cast<std::size_t>(k)] : nan);
    };
    if (res.has_predictions) {
      cols(row.mean);
      cols(row.std);
    }
    if (res.has_truth) cols(row.truth ? *row.truth : std::vector<double>(static_cast<std::size_t>(n), nan));
    os << "\n";
  }
}

inline void save_sweep_csv(const std::filesystem::path& path, const SweepResult& res) {
  binio::atomic_write(path, [&](std::ostream& os) { write_sweep_csv(os, res); }, std::ios::out);
}

inline SweepResult read_sweep_csv(std::istream& is, const std::string& source = "<sweep>") {
  SweepResult res;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    if (line.rfind("# system=", 0) == 0) {
      std::istringstream ss(line.substr(2));
      std::string tok;
      while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "system") res.system = parse_system(val);
        else if (key == "kind") res.grid.kind = val == "plane" ? GridKind::Plane : GridKind::Line;
        else if (key == "r_lo") res.grid.r_lo = detail::parse_double(val);
        else if (key == "r_hi") res.grid.r_hi = detail::parse_double(val);
        else if (key == "r_count") res.grid.r_count = std::stoi(val);
        else if (key == "b_lo") res.grid.b_lo = detail::parse_double(val);
        else if (key == "b_hi") res.grid.b_hi = detail::parse_double(val);
        else if (key == "b_count") res.grid.b_count = std::stoi(val);
        else if (key == "sigma") res.grid.sigma = detail::parse_double(val);
      }
      continue;
    }
    if (line.rfind("# huber_vs_classical=", 0) == 0) {
      std::istringstream ss(line.substr(line.find('=') + 1));
      std::string mean, pm, sd;
      ss >> mean >> pm >> sd;
      res.huber = MeanStd{detail::parse_double(mean), detail::parse_double(sd)};
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    header = detail::split_csv(line);
    break;
  }
  if (header.size() < 3 || header[0] != "r") throw FormatError(source + ": missing CSV header");
  res.n_les = system_dim(res.system);
  const int n = res.n_les;
  std::size_t expected = 3;
  for (const auto& h : header) {
    if (h.rfind("le_pred_mean_", 0) == 0) res.has_predictions = true;
    if (h.rfind("le_true_", 0) == 0) res.has_truth = true;
  }
  expected += (res.has_predictions ? 2 * n : 0) + (res.has_truth ? n : 0);
  if (header.size() != expected) throw FormatError(detail::concat(source, ": expected ", expected, " columns"));
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != expected) throw FormatError(detail::concat(source, ": row with ", cells.size(), " cells"));
    SweepRow row;
    row.params.r = detail::parse_double(cells[0]);
    row.params.b = detail::parse_double(cells[1]);
    row.params.sigma = detail::parse_double(cells[2]);
    std::size_t c = 3;
    const auto take = [&] {
      std::vector<double> v;
      for (int k = 0; k < n; ++k) v.push_back(detail::parse_double(cells[c++]));
      return v;
    };
    if (res.has_predictions) {
      row.mean = take();
      row.std = take();
      if (std::isnan(row.mean[0])) row.ok = false;
    }
    if (res.has_truth) {
      auto t = take();
      if (std::isnan(t[0])) row.ok = false;
      else row.truth = std::move(t);
    }
    res.rows.push_back(std::move(row));
  }
  return res;
}

inline SweepResult load_sweep_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(detail::concat("cannot open ", path.string()));
  return read_sweep_csv(is, path.string());
}

/// Merges classical truth from `truth` into the prediction rows of `pred`
/// (same grid, same order).
inline SweepResult attach_truth(SweepResult pred, const SweepResult& truth) {
  require(pred.rows.size() == truth.rows.size() && truth.has_truth, "truth and prediction grids do not match");
  for (std::size_t i = 0; i < pred.rows.size(); ++i) {
    const auto& t = truth.rows[i];
    require(std::abs(t.params.r - pred.rows[i].params.r) < 1e-9 && std::abs(t.params.b - pred.rows[i].params.b) < 1e-9,
            "grid point ", i, " differs between truth and prediction files");
    pred.rows[i].truth = t.truth;
    if (!t.ok) pred.rows[i].ok = false;
  }
  pred.has_truth = true;
  return pred;
}

inline void write_histogram_csv(std::ostream& os, const ErrorHistogram& h) {
  os << "le_index,truth_bin_lo,truth_bin_hi,error_bin,percent,count\n";
  for (const auto& r : h.rows) {
    os << r.le_index << ',' << detail::fmt_double(r.truth_lo) << ',' << detail::fmt_double(r.truth_hi) << ','
       << kErrorBinLabels[static_cast<std::size_t>(r.error_bin)] << ',' << detail::fmt_double(r.percent) << ','
       << r.count << "\n";
  }
}

inline void save_histogram_csv(const std::filesystem::path& path, const ErrorHistogram& h) {
  binio::atomic_write(path, [&](std::ostream& os) { write_histogram_csv(os, h); }, std::ios::out);
}

}  // namespace lyapnet
