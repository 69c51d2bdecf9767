#pragma once

// Labeled dataset construction: ground-truth spectra plus a single observed
// coordinate sampled at 0.1 time units, normalized to [0, 1].

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lyapnet/dynsys.hpp"
#include "lyapnet/errors.hpp"
#include "lyapnet/integrate.hpp"
#include "lyapnet/lyapunov.hpp"
#include "lyapnet/parallel.hpp"
#include "lyapnet/rng.hpp"

namespace lyapnet {

inline constexpr std::size_t kSeriesLength = 1000;
/// Spacing of series points in time units.
inline constexpr double kSeriesSpacing = 0.1;
inline constexpr double kDedupTolerance = 1e-4;

enum class Profile : std::uint8_t { Paper = 0, Desk = 1, Custom = 2 };

inline std::string_view to_string(Profile p) {
  switch (p) {
    case Profile::Paper: return "paper";
    case Profile::Desk: return "desk";
    default: return "custom";
  }
}

inline Profile parse_profile(std::string_view name) {
  if (name == "paper") return Profile::Paper;
  if (name == "desk") return Profile::Desk;
  if (name == "custom") return Profile::Custom;
  throw ContractViolation(detail::concat("unknown profile '", name, "' (expected paper or desk)"));
}

inline LEConfig profile_config(Profile p) {
  require(p != Profile::Custom, "custom profile has no preset LE configuration");
  return p == Profile::Paper ? LEConfig::paper() : LEConfig::desk();
}

struct RawSample {
  SystemParams params;
  std::vector<double> series;
  LEVector le_truth;
};

/// RawSample whose series has been mapped onto [0, 1].
struct LabeledSample {
  SystemParams params;
  std::vector<double> series;
  LEVector le_truth;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct DatasetSplits {
  SystemKind system = SystemKind::Lorenz;
  Profile profile = Profile::Desk;
  std::uint64_t seed = 0;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> val;
  std::vector<LabeledSample> test;
  int batch_train = 128;
  int batch_eval = 100;
};

/// Maps the series range linearly onto [0, 1]. A constant series (range below
/// 1e-12) becomes `constant_fill` everywhere.
inline std::vector<double> normalize(std::span<const double> series, double constant_fill) {
  require(!series.empty(), "cannot normalize an empty series");
  require(constant_fill >= 0.0 && constant_fill <= 1.0, "constant fill must lie in [0, 1]");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : series) {
    require(std::isfinite(v), "series contains a non-finite value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> out(series.size());
  const double range = hi - lo;
  if (range > 1e-12) {
    std::transform(series.begin(), series.end(), out.begin(), [&](double v) { return (v - lo) / range; });
    // Guard the endpoints against rounding so min = 0 and max = 1 exactly.
    for (std::size_t i = 0; i < series.size(); ++i) {
      if (series[i] == lo) out[i] = 0.0;
      if (series[i] == hi) out[i] = 1.0;
    }
  } else {
    std::fill(out.begin(), out.end(), constant_fill);
  }
  return out;
}

/// normalize() with the constant fill drawn from `rng` at slot `index`.
inline std::vector<double> normalize(std::span<const double> series, const CounterRng& rng, std::uint64_t index) {
  return normalize(series, rng.uniform(RngStream::ConstantFill, index));
}

inline double linf_distance(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "series lengths differ");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// Greedy near-duplicate filter: walks the samples in order and keeps one iff
/// its sup-norm distance to every sample kept so far is >= tol.
template <typename Sample>
std::vector<Sample> dedup(std::vector<Sample> samples, double tol = kDedupTolerance) {
  if (samples.empty()) return samples;
  const std::size_t len = samples.front().series.size();
  for (const auto& s : samples) require(s.series.size() == len, "dedup needs equal-length series");
  std::vector<Sample> kept;
  kept.reserve(samples.size());
  for (auto& s : samples) {
    const bool near = std::any_of(kept.begin(), kept.end(), [&](const Sample& k) {
      for (std::size_t i = 0; i < len; ++i) {
        if (std::abs(k.series[i] - s.series[i]) >= tol) return false;
      }
      return true;
    });
    if (!near) kept.push_back(std::move(s));
  }
  return kept;
}

/// Ground truth spectrum plus the observed coordinate over the last 100 time
/// units of the measurement run, one point every 100 steps (spacing 0.1 at
/// the default step of 0.001).
inline RawSample generate_labeled_sample(SystemKind kind, const SystemParams& params, const LEConfig& cfg) {
  cfg.validate();
  const std::int64_t stride = std::llround(kSeriesSpacing / cfg.measure_step);
  require(stride >= 1 && std::abs(static_cast<double>(stride) * cfg.measure_step - kSeriesSpacing) < 1e-12,
          "measure_step must divide the series spacing ", kSeriesSpacing);
  const std::int64_t n = cfg.measure_steps();
  const std::int64_t span = static_cast<std::int64_t>(kSeriesLength) * stride;
  require(n >= span, "measure run of ", n, " steps is shorter than the ", span, " steps the series needs");

  RawSample out;
  out.params = params;
  out.series.assign(kSeriesLength, 0.0);
  const SystemSpec spec{kind, params};
  with_field(spec, [&](const auto& field) {
    using F = std::decay_t<decltype(field)>;
    const Vec<F::dim> s0 = default_initial_state(kind);
    // Steps n, n - stride, ..., n - (len-1) stride land in slots len-1 ... 0.
    auto record = [&](std::int64_t step, const Vec<F::dim>& s) {
      const std::int64_t back = n - step;
      if (back % stride == 0 && back / stride < static_cast<std::int64_t>(kSeriesLength)) {
        out.series[kSeriesLength - 1 - static_cast<std::size_t>(back / stride)] = s[observed_index(kind)];
      }
    };
    out.le_truth = benettin_spectrum(field, s0, cfg, record).exponents;
  });
  return out;
}

/// Short inference-time run: 1000 time units of transient and 100 more at
/// step 0.01, keeping every 10th point, then normalized with the fill drawn
/// from rng at slot `index`.
inline std::vector<double> generate_prediction_series(SystemKind kind, const SystemParams& params,
                                                      const CounterRng& rng, std::uint64_t index) {
  constexpr double step = 0.01;
  constexpr int keep_every = 10;
  const SystemSpec spec{kind, params};
  std::vector<double> raw;
  raw.reserve(kSeriesLength);
  try {
    with_field(spec, [&](const auto& field) {
      using F = std::decay_t<decltype(field)>;
      const detail::FlushDenormals ftz;
      Vec<F::dim> s = default_initial_state(kind);
      const int transient = 100000;
      for (int i = 0; i < transient; ++i) s = dopri5_step(field, s, step, i * step);
      const int tail = static_cast<int>(kSeriesLength) * keep_every;
      for (int i = 1; i <= tail; ++i) {
        s = dopri5_step(field, s, step, (transient + i - 1) * step);
        if (i % keep_every == 0) raw.push_back(s[observed_index(kind)]);
      }
    });
  } catch (const OverflowError& e) {
    throw OverflowError(detail::concat(e.what(), " [r=", params.r, ", b=", params.b, "]"));
  }
  return normalize(raw, rng, index);
}

struct BuildConfig {
  LEConfig le = LEConfig::desk();
  Profile profile = Profile::Desk;
  /// Points per r-line in the non-random regime.
  int per_line = 6000;
  /// (r, b) draws in the random regime.
  int random_pool = 24000;
  int n_train = 8000;
  int n_val = 2000;
  int n_test = 2000;
  double dedup_tol = kDedupTolerance;
  unsigned jobs = 0;
  /// Progress output to stderr.
  bool verbose = false;
};

namespace detail {

/// Generates samples for every parameter point in parallel, normalizes them
/// with fills drawn from slot (fill_offset + i), and drops (logging) points
/// whose integration failed. Output order follows `points`.
inline std::vector<LabeledSample> generate_pool(SystemKind kind, const std::vector<SystemParams>& points,
                                                const BuildConfig& cfg, const CounterRng& rng,
                                                std::uint64_t fill_offset) {
  std::vector<std::optional<LabeledSample>> slots(points.size());
  std::atomic<std::size_t> done{0};
  parallel_for(points.size(), cfg.jobs, [&](std::size_t i) {
    try {
      RawSample raw = generate_labeled_sample(kind, points[i], cfg.le);
      slots[i] = LabeledSample{raw.params, normalize(raw.series, rng, fill_offset + i), std::move(raw.le_truth)};
    } catch (const Error& e) {
      std::cerr << "lyapnet: dropping sample r=" << points[i].r << " b=" << points[i].b << ": " << e.what() << "\n";
    }
    const std::size_t d = ++done;
    if (cfg.verbose && (d % 100 == 0 || d == points.size())) {
      std::cerr << "  generated " << d << "/" << points.size() << "\n";
    }
  });
  std::vector<LabeledSample> out;
  out.reserve(points.size());
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  return out;
}

inline std::vector<LabeledSample> take_random(std::vector<LabeledSample>& pool, std::size_t n, const CounterRng& rng,
                                              std::uint64_t stream, std::string_view what) {
  if (pool.size() < n) {
    throw ShortageError(concat("not enough distinct samples for ", what, ": need ", n, ", have ", pool.size(),
                               " after deduplication"));
  }
  const auto perm = rng.permutation(pool.size(), stream);
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[perm[i]]);
  return out;
}

}  // namespace detail

/// r values of one training line: n equidistant points in (0, 300].
inline std::vector<double> training_line_r(int n) {
  require(n >= 1, "need at least one point per line");
  std::vector<double> r(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = 300.0 * (i + 1) / n;
  return r;
}

inline constexpr std::array<double, 4> kLineB = {2.0, 2.4, 8.0 / 3.0, 2.8};

/// Four r-lines (b = 2, 2.4, 8/3, 2.8; sigma = 10). Train draws from the
/// b = 2 and 8/3 pools, validation from b = 2.4, test from b = 2.8. Each
/// line pool is deduplicated on its own.
inline DatasetSplits build_nonrandom_dataset(SystemKind kind, std::uint64_t seed, const BuildConfig& cfg) {
  const CounterRng rng(seed);
  const auto rs = training_line_r(cfg.per_line);
  std::array<std::vector<LabeledSample>, 4> pools;
  for (std::size_t line = 0; line < kLineB.size(); ++line) {
    std::vector<SystemParams> points;
    for (double r : rs) {
      SystemParams p;
      p.r = r;
      p.b = kLineB[line];
      points.push_back(p);
    }
    if (cfg.verbose) std::cerr << "line b=" << kLineB[line] << "\n";
    pools[line] = dedup(detail::generate_pool(kind, points, cfg, rng, line * rs.size()), cfg.dedup_tol);
  }
  std::vector<LabeledSample> train_pool = std::move(pools[0]);
  train_pool.insert(train_pool.end(), pools[2].begin(), pools[2].end());

  DatasetSplits out;
  out.system = kind;
  out.profile = cfg.profile;
  out.seed = seed;
  const auto stream = [](int k) { return substream(RngStream::SplitShuffle, static_cast<std::uint64_t>(k)); };
  out.train = detail::take_random(train_pool, static_cast<std::size_t>(cfg.n_train), rng, stream(0), "train (b=2, 8/3)");
  out.val = detail::take_random(pools[1], static_cast<std::size_t>(cfg.n_val), rng, stream(1), "validation (b=2.4)");
  out.test = detail::take_random(pools[3], static_cast<std::size_t>(cfg.n_test), rng, stream(2), "test (b=2.8)");
  return out;
}

/// Uniform (r, b) in [0, 300] x [2, 3] with sigma = 10, then disjoint random splits.
inline DatasetSplits build_random_dataset(SystemKind kind, std::uint64_t seed, const BuildConfig& cfg) {
  const CounterRng rng(seed);
  std::vector<SystemParams> points(static_cast<std::size_t>(cfg.random_pool));
  for (std::size_t i = 0; i < points.size(); ++i) {
    SystemParams p;
    p.r = rng.uniform(RngStream::RandomParams, 2 * i, 0.0, 300.0);
    p.b = rng.uniform(RngStream::RandomParams, 2 * i + 1, 2.0, 3.0);
    points[i] = p;
  }
  auto pool = dedup(detail::generate_pool(kind, points, cfg, rng, 0), cfg.dedup_tol);
  const std::size_t need = static_cast<std::size_t>(cfg.n_train + cfg.n_val + cfg.n_test);
  if (pool.size() < need) {
    throw ShortageError(detail::concat("random pool has ", pool.size(), " distinct samples, splits need ", need));
  }
  const auto perm = rng.permutation(pool.size(), substream(RngStream::SplitShuffle, 0));
  DatasetSplits out;
  out.system = kind;
  out.profile = cfg.profile;
  out.seed = seed;
  std::size_t k = 0;
  for (int i = 0; i < cfg.n_train; ++i) out.train.push_back(pool[perm[k++]]);
  for (int i = 0; i < cfg.n_val; ++i) out.val.push_back(pool[perm[k++]]);
  for (int i = 0; i < cfg.n_test; ++i) out.test.push_back(pool[perm[k++]]);
  return out;
}

}  // namespace lyapnet
