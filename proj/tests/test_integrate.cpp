#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <lyapnet/integrate.hpp>

using namespace lyapnet;

namespace {

struct Decay {
  static constexpr int dim = 1;
  double a = -1.0;
  void rhs(const Vec<1>& s, Vec<1>& ds) const { ds[0] = a * s[0]; }
  void jacobian(const Vec<1>&, Mat<1>& j) const { j(0, 0) = a; }
};

struct Zero {
  static constexpr int dim = 2;
  void rhs(const Vec<2>&, Vec<2>& ds) const { ds.setZero(); }
  void jacobian(const Vec<2>&, Mat<2>& j) const { j.setZero(); }
};

struct Rotation {
  static constexpr int dim = 2;
  void rhs(const Vec<2>& s, Vec<2>& ds) const { ds << -s[1], s[0]; }
  void jacobian(const Vec<2>&, Mat<2>& j) const { j << 0, -1, 1, 0; }
};

struct Blowup {
  static constexpr int dim = 1;
  void rhs(const Vec<1>& s, Vec<1>& ds) const { ds[0] = s[0] * s[0]; }
  void jacobian(const Vec<1>& s, Mat<1>& j) const { j(0, 0) = 2 * s[0]; }
};

}  // namespace

TEST(Dopri5, ZeroFieldLeavesStateUnchanged) {
  const Vec<2> s(3.0, -4.0);
  EXPECT_EQ(dopri5_step(Zero{}, s, 0.1), s);
}

TEST(Dopri5, ExponentialDecayOneStep) {
  const auto s = dopri5_step(Decay{}, Vec<1>(1.0), 0.1);
  EXPECT_NEAR(s[0], std::exp(-0.1), 1e-9);
}

TEST(Dopri5, FifthOrderLocalError) {
  double prev = 0;
  for (double h : {0.1, 0.05, 0.025}) {
    const double err = std::abs(dopri5_step(Decay{}, Vec<1>(1.0), h)[0] - std::exp(-h));
    if (prev > 0) EXPECT_GE(prev / err, std::pow(2.0, 4.5)) << "h=" << h;
    prev = err;
  }
}

TEST(Dopri5, OverflowIsReported) {
  // y' = y^2 from y = 1 blows up at t = 1.
  IntegrationConfig cfg{0.1, 0.0, 5.0, 0};
  EXPECT_THROW(integrate(Blowup{}, Vec<1>(1.0), cfg), OverflowError);
}

TEST(Integrate, EmptySpanReturnsInitialState) {
  IntegrationConfig cfg{0.01, 2.0, 2.0, 1};
  const auto tr = integrate(Rotation{}, Vec<2>(1, 0), cfg);
  ASSERT_EQ(tr.size(), 1u);
  EXPECT_EQ(tr.states[0], StateVector(Vec<2>(1, 0)));
  EXPECT_EQ(tr.times[0], 2.0);
}

TEST(Integrate, RecordCounting) {
  IntegrationConfig cfg{0.001, 0.0, 10.0, 100};
  const auto tr = integrate(Decay{}, Vec<1>(1.0), cfg);
  EXPECT_EQ(tr.size(), 101u);
  EXPECT_NEAR(tr.times.back(), 10.0, 1e-12);
  EXPECT_NEAR(tr.states.back()[0], std::exp(-10.0), 1e-12);
}

TEST(Integrate, FinalOnly) {
  IntegrationConfig cfg{0.01, 0.0, 1.0, 0};
  const auto tr = integrate(Decay{}, Vec<1>(1.0), cfg);
  ASSERT_EQ(tr.size(), 1u);
  EXPECT_NEAR(tr.times[0], 1.0, 1e-12);
}

TEST(Integrate, RotationReturnsAfterOnePeriod) {
  const int n = 2000;
  IntegrationConfig cfg{2 * std::numbers::pi / n, 0.0, 2 * std::numbers::pi, 0};
  const auto tr = integrate(Rotation{}, Vec<2>(1, 0), cfg);
  EXPECT_LT((tr.states.back() - StateVector(Vec<2>(1, 0))).norm(), 1e-8);
}

TEST(Integrate, LorenzStaysBounded) {
  SystemSpec spec;
  IntegrationConfig cfg{0.01, 0.0, 100.0, 1};
  const auto tr = integrate(spec, default_initial_state(spec.kind), cfg);
  double biggest = 0;
  for (const auto& s : tr.states) biggest = std::max(biggest, s.cwiseAbs().maxCoeff());
  EXPECT_LT(biggest, 100.0);
  EXPECT_GT(biggest, 10.0);
}

TEST(Integrate, RejectsBadConfig) {
  EXPECT_THROW(integrate(Decay{}, Vec<1>(1.0), IntegrationConfig{0.0, 0.0, 1.0, 1}), ContractViolation);
  EXPECT_THROW(integrate(Decay{}, Vec<1>(1.0), IntegrationConfig{0.1, 1.0, 0.0, 1}), ContractViolation);
}

TEST(Tangents, ZeroStepsIsIdentity) {
  const Mat<2> basis = Mat<2>::Identity() * 3;
  auto [s, m] = integrate_with_tangents(Rotation{}, Vec<2>(1, 2), basis, 0, 0.01);
  EXPECT_EQ(s, Vec<2>(1, 2));
  EXPECT_EQ(m, basis);
}

TEST(Tangents, ZeroFlowKeepsBasis) {
  Mat<2> basis;
  basis << 1, 2, 3, 4;
  auto [s, m] = integrate_with_tangents(Zero{}, Vec<2>(1, 2), basis, 50, 0.1);
  EXPECT_EQ(m, basis);
}

TEST(Tangents, LinearScalarGrowth) {
  Decay f{0.7};
  auto [s, m] = integrate_with_tangents(f, Vec<1>(2.0), Mat<1>::Identity(), 100, 0.01);
  EXPECT_NEAR(m(0, 0) / std::exp(0.7), 1.0, 1e-9);
  EXPECT_NEAR(s[0] / (2.0 * std::exp(0.7)), 1.0, 1e-9);
}

TEST(Tangents, MatchFiniteDifferenceOfFlow) {
  SystemSpec spec;
  const Vec<3> s0(2.0, 3.0, 15.0);
  const int n = 200;
  const double h = 0.001;
  auto [s, m] = integrate_with_tangents(spec, s0, Matrix::Identity(3, 3), n, h);
  const double eps = 1e-6;
  for (int c = 0; c < 3; ++c) {
    StateVector up = s0, dn = s0;
    up[c] += eps;
    dn[c] -= eps;
    const auto fu = integrate_with_tangents(spec, up, Matrix::Identity(3, 3), n, h).first;
    const auto fd = integrate_with_tangents(spec, dn, Matrix::Identity(3, 3), n, h).first;
    const StateVector col = (fu - fd) / (2 * eps);
    EXPECT_LT((col - m.col(c)).cwiseAbs().maxCoeff(), 1e-5 * (1 + m.col(c).norm()));
  }
}

TEST(Tangents, RuntimeShapeChecks) {
  SystemSpec spec;
  EXPECT_THROW(integrate_with_tangents(spec, default_initial_state(spec.kind), Matrix::Identity(2, 2), 1, 0.01),
               ContractViolation);
  EXPECT_THROW(integrate_with_tangents(spec, StateVector::Zero(6), Matrix::Identity(3, 3), 1, 0.01), ContractViolation);
}
