#pragma once

// Fixed-step Dormand-Prince RK5(4). Only the 5th-order solution is used; the
// step size is never adapted, so the embedded 4th-order estimate (and the
// seventh, FSAL stage that only feeds it) is not evaluated.

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#if defined(__SSE__) || defined(_M_X64)
#include <xmmintrin.h>
#define LYAPNET_HAVE_MXCSR 1
#endif

#include "lyapnet/dynsys.hpp"
#include "lyapnet/errors.hpp"

namespace lyapnet {

namespace dopri5 {

inline constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;

inline constexpr double a21 = 1.0 / 5.0;
inline constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
inline constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
inline constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                        a54 = -212.0 / 729.0;
inline constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                        a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;

// 5th-order weights (b2 = b7 = 0).
inline constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                        b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;

}  // namespace dopri5

struct IntegrationConfig {
  double step = 0.01;
  double t0 = 0.0;
  double t1 = 1.0;
  /// Keep one state every `record_every` steps; 0 keeps only the final state.
  int record_every = 1;

  /// Step count, round((t1 - t0) / step).
  std::int64_t n_steps() const { return std::llround((t1 - t0) / step); }

  void validate() const {
    require(std::isfinite(step) && step > 0.0, "integration step must be positive, got ", step);
    require(std::isfinite(t0) && std::isfinite(t1) && t1 >= t0, "need t1 >= t0, got [", t0, ", ", t1, "]");
    require(record_every >= 0, "record_every must be >= 0");
    const double steps = (t1 - t0) / step;
    require(std::abs(steps - std::round(steps)) <= 0.5 + 1e-9, "span is not a whole number of steps");
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector> states;

  std::size_t size() const noexcept { return times.size(); }
};

namespace detail {

template <int N>
[[noreturn]] void throw_overflow(const Vec<N>& s, double t, std::string_view what) {
  std::ostringstream os;
  os.precision(17);
  os << what << " at t=" << t << ", state=(";
  for (int i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ")";
  throw OverflowError(os.str());
}

/// Flushes subnormal results and inputs to zero while alive. Trajectories
/// decaying onto the origin otherwise spend most of their time in microcode
/// assists.
class FlushDenormals {
 public:
#ifdef LYAPNET_HAVE_MXCSR
  FlushDenormals() noexcept : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
 public:
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;
};

}  // namespace detail

/// One explicit DP5 step. `t` is only used for error context.
template <VectorField F>
Vec<F::dim> dopri5_step(const F& field, const Vec<F::dim>& s, double h,
                        double t = std::numeric_limits<double>::quiet_NaN()) {
  using namespace dopri5;
  constexpr int N = F::dim;
  Vec<N> k1, k2, k3, k4, k5, k6;
  field.rhs(s, k1);
  field.rhs(s + h * (a21 * k1), k2);
  field.rhs(s + h * (a31 * k1 + a32 * k2), k3);
  field.rhs(s + h * (a41 * k1 + a42 * k2 + a43 * k3), k4);
  field.rhs(s + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), k5);
  field.rhs(s + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), k6);
  Vec<N> next = s + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  if (!next.allFinite()) detail::throw_overflow<N>(s, t, "non-finite state in DP5 step");
  return next;
}

/// One DP5 step of the augmented system s' = f(s), M' = J(s) M, advancing the
/// state and all tangent columns together.
template <VectorField F>
void dopri5_tangent_step(const F& field, Vec<F::dim>& s, Mat<F::dim>& m, double h) {
  using namespace dopri5;
  constexpr int N = F::dim;
  Vec<N> k1, k2, k3, k4, k5, k6;
  Mat<N> q1, q2, q3, q4, q5, q6;
  Vec<N> si;
  Mat<N> mi;

  field.rhs(s, k1);
  apply_jacobian(field, s, m, q1);

  si = s + h * (a21 * k1);
  mi = m + h * (a21 * q1);
  field.rhs(si, k2);
  apply_jacobian(field, si, mi, q2);

  si = s + h * (a31 * k1 + a32 * k2);
  mi = m + h * (a31 * q1 + a32 * q2);
  field.rhs(si, k3);
  apply_jacobian(field, si, mi, q3);

  si = s + h * (a41 * k1 + a42 * k2 + a43 * k3);
  mi = m + h * (a41 * q1 + a42 * q2 + a43 * q3);
  field.rhs(si, k4);
  apply_jacobian(field, si, mi, q4);

  si = s + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
  mi = m + h * (a51 * q1 + a52 * q2 + a53 * q3 + a54 * q4);
  field.rhs(si, k5);
  apply_jacobian(field, si, mi, q5);

  si = s + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
  mi = m + h * (a61 * q1 + a62 * q2 + a63 * q3 + a64 * q4 + a65 * q5);
  field.rhs(si, k6);
  apply_jacobian(field, si, mi, q6);

  s += h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  m += h * (b1 * q1 + b3 * q3 + b4 * q4 + b5 * q5 + b6 * q6);
}

/// Largest tangent magnitude tolerated before we call it a missing renormalization.
inline constexpr double kTangentLimit = 1e150;

namespace detail {

template <int N>
void check_tangents(const Vec<N>& s, const Mat<N>& m, double t) {
  if (!s.allFinite()) throw_overflow<N>(s, t, "non-finite state in tangent integration");
  const double biggest = m.cwiseAbs().maxCoeff();
  if (!(biggest <= kTangentLimit)) throw_overflow<N>(s, t, "tangent vector exceeded 1e150 (renormalize more often)");
}

}  // namespace detail

/// Integrates from s0 over cfg's span with fixed steps. Always returns at
/// least one state: the initial one when recording, the final one otherwise.
template <VectorField F>
Trajectory integrate(const F& field, const Vec<F::dim>& s0, const IntegrationConfig& cfg) {
  cfg.validate();
  const std::int64_t n = cfg.n_steps();
  Trajectory out;
  const auto record = [&](double t, const Vec<F::dim>& s) {
    out.times.push_back(t);
    out.states.emplace_back(s);
  };
  const detail::FlushDenormals ftz;
  Vec<F::dim> s = s0;
  if (cfg.record_every > 0) {
    const auto n_records = static_cast<std::size_t>(n / cfg.record_every + 1);
    out.times.reserve(n_records);
    out.states.reserve(n_records);
    record(cfg.t0, s);
  }
  for (std::int64_t i = 1; i <= n; ++i) {
    const double t = cfg.t0 + static_cast<double>(i - 1) * cfg.step;
    try {
      s = dopri5_step(field, s, cfg.step, t);
    } catch (const OverflowError& e) {
      throw OverflowError(detail::concat(e.what(), " (step ", i, " of ", n, ")"));
    }
    if (cfg.record_every > 0 && i % cfg.record_every == 0) record(cfg.t0 + static_cast<double>(i) * cfg.step, s);
  }
  if (cfg.record_every == 0) record(cfg.t0 + static_cast<double>(n) * cfg.step, s);
  return out;
}

/// Advances (state, tangent basis) by n_steps augmented DP5 steps of size h.
template <VectorField F>
std::pair<Vec<F::dim>, Mat<F::dim>> integrate_with_tangents(const F& field, const Vec<F::dim>& s0,
                                                           const Mat<F::dim>& basis, std::int64_t n_steps,
                                                           double h) {
  require(h > 0.0 && std::isfinite(h), "step must be positive");
  require(n_steps >= 0, "n_steps must be non-negative");
  require(basis.allFinite(), "tangent basis must be finite");
  const detail::FlushDenormals ftz;
  Vec<F::dim> s = s0;
  Mat<F::dim> m = basis;
  for (std::int64_t i = 0; i < n_steps; ++i) {
    dopri5_tangent_step(field, s, m, h);
    detail::check_tangents<F::dim>(s, m, static_cast<double>(i + 1) * h);
  }
  return {s, m};
}

// Runtime-dimension entry points for the two Lorenz systems.

inline StateVector dopri5_step(const SystemSpec& spec, const StateVector& s, double h) {
  detail::check_dim(spec, s.size());
  require(h > 0.0, "step must be positive");
  return with_field(spec, [&](const auto& f) -> StateVector {
    using F = std::decay_t<decltype(f)>;
    return dopri5_step(f, Vec<F::dim>(s), h);
  });
}

inline Trajectory integrate(const SystemSpec& spec, const StateVector& s0, const IntegrationConfig& cfg) {
  detail::check_dim(spec, s0.size());
  return with_field(spec, [&](const auto& f) {
    using F = std::decay_t<decltype(f)>;
    return integrate(f, Vec<F::dim>(s0), cfg);
  });
}

inline std::pair<StateVector, Matrix> integrate_with_tangents(const SystemSpec& spec, const StateVector& s0,
                                                              const Matrix& basis, std::int64_t n_steps,
                                                              double h) {
  detail::check_dim(spec, s0.size());
  require(basis.rows() == spec.dim() && basis.cols() == spec.dim(), "basis must be dim x dim");
  return with_field(spec, [&](const auto& f) -> std::pair<StateVector, Matrix> {
    using F = std::decay_t<decltype(f)>;
    auto [s, m] = integrate_with_tangents(f, Vec<F::dim>(s0), Mat<F::dim>(basis), n_steps, h);
    return {StateVector(s), Matrix(m)};
  });
}

}  // namespace lyapnet
