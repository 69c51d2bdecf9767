#pragma once

// Full Lyapunov spectrum by tangent-bundle integration with periodic
// modified Gram-Schmidt reorthonormalization.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "lyapnet/dynsys.hpp"
#include "lyapnet/errors.hpp"
#include "lyapnet/integrate.hpp"
#include "lyapnet/rng.hpp"

namespace lyapnet {

/// Exponents in 1/time, sorted descending (LE_1 = maximal exponent first).
using LEVector = std::vector<double>;

inline void sort_descending(LEVector& les) { std::sort(les.begin(), les.end(), std::greater<>{}); }

struct LEConfig {
  double transient_time = 500.0;
  double transient_step = 0.01;
  double measure_time = 1000.0;
  double measure_step = 0.001;
  int renorm_interval_steps = 1000;

  /// Full-length runs: 100,000 time units of transient, 10,001 of measurement.
  static LEConfig paper() { return {100000.0, 0.01, 10001.0, 0.001, 1000}; }
  /// Shortened runs that fit on a desktop.
  static LEConfig desk() { return {500.0, 0.01, 1000.0, 0.001, 1000}; }

  std::int64_t transient_steps() const { return std::llround(transient_time / transient_step); }
  std::int64_t measure_steps() const { return std::llround(measure_time / measure_step); }

  void validate() const {
    require(transient_time >= 0.0 && transient_step > 0.0, "transient time/step must be positive");
    require(measure_time > 0.0 && measure_step > 0.0, "measure time/step must be positive");
    require(renorm_interval_steps >= 1, "renorm_interval_steps must be >= 1");
    require(measure_steps() >= 1, "measure span shorter than one step");
  }

  friend bool operator==(const LEConfig&, const LEConfig&) = default;
};

template <typename MatrixT>
struct QRResult {
  MatrixT q;
  MatrixT r;
  std::vector<double> norms;
};

/// Modified Gram-Schmidt on the columns of m: m = q r with q orthonormal and
/// r upper triangular with diag(r) = norms > 0.
template <typename MatrixT>
QRResult<MatrixT> gram_schmidt_qr(const MatrixT& m) {
  require(m.rows() == m.cols(), "gram_schmidt_qr expects a square matrix");
  const auto n = m.cols();
  QRResult<MatrixT> out{m, MatrixT::Zero(n, n), std::vector<double>(static_cast<std::size_t>(n))};
  auto& q = out.q;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      const double proj = q.col(j).dot(q.col(i));
      out.r(j, i) = proj;
      q.col(i) -= proj * q.col(j);
    }
    const double norm = q.col(i).norm();
    if (!(norm >= 1e-300)) {
      throw RankDeficiencyError(detail::concat("column ", i, " is linearly dependent (norm ", norm, ")"));
    }
    out.r(i, i) = norm;
    out.norms[static_cast<std::size_t>(i)] = norm;
    q.col(i) /= norm;
  }
  return out;
}

/// Fixed orthonormal start basis in general position. An axis-aligned
/// identity start can sit inside an invariant subspace (e.g. the z-axis of
/// the Lorenz origin) and then needs a long time to pick up the right
/// direction, which biases finite-time averages.
template <int N>
Mat<N> initial_tangent_basis() {
  const CounterRng rng(0x1A9B);
  Mat<N> m;
  for (int j = 0; j < N; ++j) {
    for (int i = 0; i < N; ++i) m(i, j) = rng.uniform(RngStream::TangentBasis, static_cast<std::uint64_t>(j * N + i), -1.0, 1.0);
    m(j, j) += 2.0;
  }
  return gram_schmidt_qr(m).q;
}

template <int N>
struct SpectrumResult {
  LEVector exponents;
  Vec<N> final_state;
};

/// Benettin-style spectrum: discard a transient, then integrate state and a
/// tangent basis (initial_tangent_basis), reorthonormalizing every
/// cfg.renorm_interval_steps steps and averaging the log stretch factors.
///
/// `on_measure_step(step, state)` is called after each measurement step
/// (step runs 1..cfg.measure_steps()) so callers can sample a series from the
/// same trajectory the exponents are computed on.
template <VectorField F, typename Observer>
SpectrumResult<F::dim> benettin_spectrum(const F& field, const Vec<F::dim>& s0, const LEConfig& cfg,
                                         Observer&& on_measure_step) {
  constexpr int N = F::dim;
  cfg.validate();
  const detail::FlushDenormals ftz;
  Vec<N> s = s0;
  const std::int64_t n_transient = cfg.transient_steps();
  for (std::int64_t i = 0; i < n_transient; ++i) {
    s = dopri5_step(field, s, cfg.transient_step, static_cast<double>(i) * cfg.transient_step);
  }

  const std::int64_t n_measure = cfg.measure_steps();
  const double h = cfg.measure_step;
  Mat<N> m = initial_tangent_basis<N>();
  std::vector<double> log_sums(N, 0.0);
  const auto renormalize = [&](double t) {
    try {
      auto qr = gram_schmidt_qr(m);
      for (int i = 0; i < N; ++i) log_sums[static_cast<std::size_t>(i)] += std::log(qr.norms[static_cast<std::size_t>(i)]);
      m = qr.q;
    } catch (const RankDeficiencyError& e) {
      throw RankDeficiencyError(detail::concat(e.what(), " after ", t, " measured time units"));
    }
  };

  std::int64_t since_renorm = 0;
  for (std::int64_t step = 1; step <= n_measure; ++step) {
    dopri5_tangent_step(field, s, m, h);
    const double t = static_cast<double>(step) * h;
    if (!s.allFinite() || !(m.cwiseAbs().maxCoeff() <= kTangentLimit)) {
      try {
        detail::check_tangents<N>(s, m, t);
      } catch (const OverflowError& e) {
        throw OverflowError(detail::concat(e.what(), " (measure phase, ", t, " time units elapsed)"));
      }
    }
    on_measure_step(step, std::as_const(s));
    if (++since_renorm == cfg.renorm_interval_steps || step == n_measure) {
      renormalize(t);
      since_renorm = 0;
    }
  }

  const double elapsed = static_cast<double>(n_measure) * h;
  LEVector les(N);
  for (int i = 0; i < N; ++i) les[static_cast<std::size_t>(i)] = log_sums[static_cast<std::size_t>(i)] / elapsed;
  sort_descending(les);
  return {std::move(les), s};
}

template <VectorField F>
SpectrumResult<F::dim> benettin_spectrum(const F& field, const Vec<F::dim>& s0, const LEConfig& cfg) {
  return benettin_spectrum(field, s0, cfg, [](std::int64_t, const Vec<F::dim>&) {});
}

/// Spectrum plus final state for one of the Lorenz systems.
inline std::pair<LEVector, StateVector> benettin_spectrum(const SystemSpec& spec, const StateVector& s0,
                                                          const LEConfig& cfg) {
  detail::check_dim(spec, s0.size());
  return with_field(spec, [&](const auto& f) -> std::pair<LEVector, StateVector> {
    using F = std::decay_t<decltype(f)>;
    auto res = benettin_spectrum(f, Vec<F::dim>(s0), cfg);
    return {std::move(res.exponents), StateVector(res.final_state)};
  });
}

/// Descending real parts of the Jacobian eigenvalues at an equilibrium: the
/// exact spectrum of a trajectory resting on a hyperbolic fixed point.
inline LEVector spectrum_of_equilibrium(const SystemSpec& spec, const StateVector& eq) {
  const StateVector f = rhs(spec, eq);
  require(f.cwiseAbs().maxCoeff() < 1e-8, "state is not an equilibrium (|rhs|_inf = ", f.cwiseAbs().maxCoeff(), ")");
  Eigen::EigenSolver<Matrix> solver(jacobian(spec, eq), /*computeEigenvectors=*/false);
  require(solver.info() == Eigen::Success, "eigenvalue computation failed");
  LEVector out;
  for (const auto& ev : solver.eigenvalues()) out.push_back(ev.real());
  sort_descending(out);
  return out;
}

}  // namespace lyapnet
