#pragma once

// The Lorenz system and two Lorenz systems with linear y-coupling.
//
//   x' = sigma (y - x)
//   y' = -x z + r x - y
//   z' = x y - b z
//
// The coupled system runs two copies with r1 = r, r2 = r - 10 and adds
// lambda1 (x2 - y2) to y1' and lambda2 (x1 - y1) to y2'.

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <string>
#include <string_view>

#include "lyapnet/errors.hpp"

namespace lyapnet {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int N>
using Mat = Eigen::Matrix<double, N, N>;

using StateVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct SystemParams {
  double sigma = 10.0;
  double r = 28.0;
  double b = 8.0 / 3.0;
  double lambda1 = 0.1;
  double lambda2 = 0.1;

  /// Second Rayleigh number of the coupled system.
  double r2() const noexcept { return r - 10.0; }

  void validate() const {
    require(std::isfinite(sigma) && std::isfinite(r) && std::isfinite(b), "system parameters must be finite");
    require(b > 0.0, "b must be positive, got ", b);
    require(std::isfinite(lambda1) && std::isfinite(lambda2), "coupling strengths must be finite");
  }

  friend bool operator==(const SystemParams&, const SystemParams&) = default;
};

enum class SystemKind : std::uint8_t { Lorenz = 0, CoupledLorenz = 1 };

constexpr int system_dim(SystemKind kind) noexcept { return kind == SystemKind::Lorenz ? 3 : 6; }

inline std::string_view to_string(SystemKind kind) {
  return kind == SystemKind::Lorenz ? "lorenz" : "coupled";
}

inline SystemKind parse_system(std::string_view name) {
  if (name == "lorenz") return SystemKind::Lorenz;
  if (name == "coupled" || name == "coupled-lorenz") return SystemKind::CoupledLorenz;
  throw ContractViolation(detail::concat("unknown system '", name, "' (expected lorenz or coupled)"));
}

struct SystemSpec {
  SystemKind kind = SystemKind::Lorenz;
  SystemParams params;

  int dim() const noexcept { return system_dim(kind); }
};

/// Any autonomous vector field with a compile-time dimension and an analytic
/// Jacobian. The two Lorenz fields below model it; tests plug in stubs.
template <typename F>
concept VectorField = requires(const F& f, const Vec<F::dim>& s, Vec<F::dim>& ds, Mat<F::dim>& jac) {
  { F::dim } -> std::convertible_to<int>;
  f.rhs(s, ds);
  f.jacobian(s, jac);
};

struct LorenzField {
  static constexpr int dim = 3;
  SystemParams p;

  void rhs(const Vec<3>& s, Vec<3>& ds) const noexcept {
    const double x = s[0], y = s[1], z = s[2];
    ds[0] = p.sigma * (y - x);
    ds[1] = -x * z + p.r * x - y;
    ds[2] = x * y - p.b * z;
  }

  void jacobian(const Vec<3>& s, Mat<3>& j) const noexcept {
    const double x = s[0], y = s[1], z = s[2];
    j << -p.sigma, p.sigma, 0.0,
         p.r - z, -1.0, -x,
         y, x, -p.b;
  }

  /// out = J(s) * m without forming J.
  void tangent(const Vec<3>& s, const Mat<3>& m, Mat<3>& out) const noexcept {
    const double x = s[0], y = s[1], z = s[2];
    out.row(0) = p.sigma * (m.row(1) - m.row(0));
    out.row(1) = (p.r - z) * m.row(0) - m.row(1) - x * m.row(2);
    out.row(2) = y * m.row(0) + x * m.row(1) - p.b * m.row(2);
  }
};

struct CoupledLorenzField {
  static constexpr int dim = 6;
  SystemParams p;

  void rhs(const Vec<6>& s, Vec<6>& ds) const noexcept {
    const double x1 = s[0], y1 = s[1], z1 = s[2];
    const double x2 = s[3], y2 = s[4], z2 = s[5];
    ds[0] = p.sigma * (y1 - x1);
    ds[1] = -x1 * z1 + p.r * x1 - y1 + p.lambda1 * (x2 - y2);
    ds[2] = x1 * y1 - p.b * z1;
    ds[3] = p.sigma * (y2 - x2);
    ds[4] = -x2 * z2 + p.r2() * x2 - y2 + p.lambda2 * (x1 - y1);
    ds[5] = x2 * y2 - p.b * z2;
  }

  void jacobian(const Vec<6>& s, Mat<6>& j) const noexcept {
    const double x1 = s[0], y1 = s[1], z1 = s[2];
    const double x2 = s[3], y2 = s[4], z2 = s[5];
    const double sg = p.sigma, b = p.b, l1 = p.lambda1, l2 = p.lambda2;
    j << -sg, sg, 0.0, 0.0, 0.0, 0.0,
         p.r - z1, -1.0, -x1, l1, -l1, 0.0,
         y1, x1, -b, 0.0, 0.0, 0.0,
         0.0, 0.0, 0.0, -sg, sg, 0.0,
         l2, -l2, 0.0, p.r2() - z2, -1.0, -x2,
         0.0, 0.0, 0.0, y2, x2, -b;
  }

  void tangent(const Vec<6>& s, const Mat<6>& m, Mat<6>& out) const noexcept {
    const double x1 = s[0], y1 = s[1], z1 = s[2];
    const double x2 = s[3], y2 = s[4], z2 = s[5];
    const double sg = p.sigma, b = p.b, l1 = p.lambda1, l2 = p.lambda2;
    out.row(0) = sg * (m.row(1) - m.row(0));
    out.row(1) = (p.r - z1) * m.row(0) - m.row(1) - x1 * m.row(2) + l1 * (m.row(3) - m.row(4));
    out.row(2) = y1 * m.row(0) + x1 * m.row(1) - b * m.row(2);
    out.row(3) = sg * (m.row(4) - m.row(3));
    out.row(4) = (p.r2() - z2) * m.row(3) - m.row(4) - x2 * m.row(5) + l2 * (m.row(0) - m.row(1));
    out.row(5) = y2 * m.row(3) + x2 * m.row(4) - b * m.row(5);
  }
};

/// out = J(s) * m, through the field's own tangent() when it has one.
template <VectorField F>
void apply_jacobian(const F& f, const Vec<F::dim>& s, const Mat<F::dim>& m, Mat<F::dim>& out) {
  if constexpr (requires { f.tangent(s, m, out); }) {
    f.tangent(s, m, out);
  } else {
    Mat<F::dim> j;
    f.jacobian(s, j);
    out.noalias() = j.lazyProduct(m);
  }
}

/// Calls fn with the concrete field for `spec`.
template <typename Fn>
decltype(auto) with_field(const SystemSpec& spec, Fn&& fn) {
  spec.params.validate();
  if (spec.kind == SystemKind::Lorenz) return fn(LorenzField{spec.params});
  return fn(CoupledLorenzField{spec.params});
}

/// Index of the single observed coordinate (x for Lorenz, x1 for the coupled system).
constexpr int observed_index(SystemKind) noexcept { return 0; }

/// Fixed initial condition used for every parameter point.
inline StateVector default_initial_state(SystemKind kind) {
  if (kind == SystemKind::Lorenz) return Vec<3>(1.0, 1.0, 1.0);
  StateVector s(6);
  s << 1.0, 1.0, 1.0, 1.1, 0.9, 1.0;
  return s;
}

/// Analytic trace of the Jacobian (phase-space divergence); state independent.
inline double divergence(const SystemSpec& spec) noexcept {
  const double one = spec.params.sigma + 1.0 + spec.params.b;
  return spec.kind == SystemKind::Lorenz ? -one : -2.0 * one;
}

namespace detail {

inline void check_dim(const SystemSpec& spec, Eigen::Index n) {
  require(n == spec.dim(), "state has length ", n, " but ", to_string(spec.kind), " has dimension ", spec.dim());
}

}  // namespace detail

inline StateVector rhs(const SystemSpec& spec, const StateVector& s) {
  detail::check_dim(spec, s.size());
  return with_field(spec, [&](const auto& field) -> StateVector {
    using F = std::decay_t<decltype(field)>;
    Vec<F::dim> ds;
    field.rhs(Vec<F::dim>(s), ds);
    return ds;
  });
}

inline Matrix jacobian(const SystemSpec& spec, const StateVector& s) {
  detail::check_dim(spec, s.size());
  return with_field(spec, [&](const auto& field) -> Matrix {
    using F = std::decay_t<decltype(field)>;
    Mat<F::dim> j;
    field.jacobian(Vec<F::dim>(s), j);
    return j;
  });
}

}  // namespace lyapnet
