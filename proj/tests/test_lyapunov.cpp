#include <gtest/gtest.h>

#include <random>

#include <lyapnet/lyapunov.hpp>

using namespace lyapnet;

namespace {

SystemSpec lorenz(double r, double b = 8.0 / 3.0) {
  SystemSpec s;
  s.params.r = r;
  s.params.b = b;
  return s;
}

LEConfig quick() { return {100.0, 0.01, 200.0, 0.001, 1000}; }

}  // namespace

TEST(GramSchmidt, Identity) {
  const auto qr = gram_schmidt_qr(Mat<3>(Mat<3>::Identity()));
  EXPECT_EQ(qr.q, Mat<3>(Mat<3>::Identity()));
  EXPECT_EQ(qr.norms, (std::vector<double>{1, 1, 1}));
}

TEST(GramSchmidt, Diagonal) {
  const Mat<3> m = Vec<3>(2, 3, 4).asDiagonal();
  const auto qr = gram_schmidt_qr(m);
  EXPECT_TRUE(qr.q.isIdentity(0));
  EXPECT_EQ(qr.norms, (std::vector<double>{2, 3, 4}));
}

TEST(GramSchmidt, Reconstruction) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-1, 1);
  int checked = 0;
  while (checked < 20) {
    Matrix m(3, 3);
    for (auto& v : m.reshaped()) v = u(gen);
    Eigen::JacobiSVD<Matrix> svd(m);
    if (svd.singularValues()(0) / svd.singularValues()(2) > 1e3) continue;
    const auto qr = gram_schmidt_qr(m);
    EXPECT_LT((qr.q.transpose() * qr.q - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((qr.q * qr.r - m).cwiseAbs().maxCoeff(), 1e-12);
    for (int i = 0; i < 3; ++i) EXPECT_GT(qr.r(i, i), 0.0);
    ++checked;
  }
}

TEST(GramSchmidt, RankDeficientThrows) {
  Matrix m(3, 3);
  m << 1, 3, 0, 0, 0, 0, 0, 0, 1;  // second column = 3 x first
  EXPECT_THROW(gram_schmidt_qr(m), RankDeficiencyError);
}

TEST(Equilibrium, StableOrigin) {
  const auto les = spectrum_of_equilibrium(lorenz(0.5), StateVector::Zero(3));
  EXPECT_NEAR(les[0], -0.4751, 1e-4);
  EXPECT_NEAR(les[1], -8.0 / 3.0, 1e-4);
  EXPECT_NEAR(les[2], -10.5249, 1e-4);
}

TEST(Equilibrium, PitchforkAtROne) {
  const auto les = spectrum_of_equilibrium(lorenz(1.0), StateVector::Zero(3));
  EXPECT_NEAR(les[0], 0.0, 1e-12);
}

TEST(Equilibrium, RZeroBTwo) {
  const auto les = spectrum_of_equilibrium(lorenz(0.0, 2.0), StateVector::Zero(3));
  EXPECT_NEAR(les[0], -1.0, 1e-12);
  EXPECT_NEAR(les[1], -2.0, 1e-12);
  EXPECT_NEAR(les[2], -10.0, 1e-12);
}

TEST(Equilibrium, RejectsNonEquilibrium) {
  EXPECT_THROW(spectrum_of_equilibrium(lorenz(28), Vec<3>(1, 1, 1)), ContractViolation);
}

TEST(Benettin, StableOriginMatchesEigenvalues) {
  const auto [les, end] = benettin_spectrum(lorenz(0.5), default_initial_state(SystemKind::Lorenz), quick());
  const LEVector expected{-0.4751, -8.0 / 3.0, -10.5249};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(les[i], expected[i], 0.05) << i;
}

TEST(Benettin, ChaoticLorenz) {
  LEConfig cfg = LEConfig::desk();
  const auto [les, end] = benettin_spectrum(lorenz(28), default_initial_state(SystemKind::Lorenz), cfg);
  EXPECT_NEAR(les[0], 0.906, 0.05);
  EXPECT_NEAR(les[1], 0.0, 0.02);
  EXPECT_NEAR(les[0] + les[1] + les[2], -(10 + 1 + 8.0 / 3.0), 0.02);
}

TEST(Benettin, SumIdentityOnRandomParams) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> ur(0, 300), ub(2, 3);
  for (int i = 0; i < 4; ++i) {
    const auto spec = lorenz(ur(gen), ub(gen));
    const auto [les, end] = benettin_spectrum(spec, default_initial_state(spec.kind), quick());
    EXPECT_NEAR(les[0] + les[1] + les[2], divergence(spec), 0.02) << "r=" << spec.params.r;
    EXPECT_TRUE(std::is_sorted(les.rbegin(), les.rend()));
  }
}

TEST(Benettin, CoupledSumIdentity) {
  SystemSpec spec;
  spec.kind = SystemKind::CoupledLorenz;
  spec.params.r = 150;
  spec.params.b = 2.5;
  const auto [les, end] = benettin_spectrum(spec, default_initial_state(spec.kind), quick());
  ASSERT_EQ(les.size(), 6u);
  double sum = 0;
  for (double v : les) sum += v;
  EXPECT_NEAR(sum, divergence(spec), 0.04);
}

TEST(Benettin, ObserverSeesEveryStep) {
  LEConfig cfg{1.0, 0.01, 2.0, 0.001, 100};
  std::int64_t calls = 0, last = 0;
  LorenzField f{SystemParams{}};
  benettin_spectrum(f, Vec<3>(1, 1, 1), cfg, [&](std::int64_t step, const Vec<3>&) {
    ++calls;
    last = step;
  });
  EXPECT_EQ(calls, 2000);
  EXPECT_EQ(last, 2000);
}

TEST(Benettin, RenormIntervalDoesNotChangeResultMuch) {
  LEConfig a = quick(), b = quick();
  b.renorm_interval_steps = 37;  // not a divisor of the step count
  const auto la = benettin_spectrum(lorenz(28), default_initial_state(SystemKind::Lorenz), a).first;
  const auto lb = benettin_spectrum(lorenz(28), default_initial_state(SystemKind::Lorenz), b).first;
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(la[i], lb[i], 1e-6);
}

TEST(Benettin, RejectsBadConfig) {
  LEConfig cfg = quick();
  cfg.renorm_interval_steps = 0;
  EXPECT_THROW(benettin_spectrum(lorenz(28), default_initial_state(SystemKind::Lorenz), cfg), ContractViolation);
}

TEST(LEConfig, Presets) {
  EXPECT_EQ(LEConfig::desk().transient_steps(), 50000);
  EXPECT_EQ(LEConfig::desk().measure_steps(), 1000000);
  EXPECT_EQ(LEConfig::paper().transient_steps(), 10000000);
  EXPECT_EQ(LEConfig::paper().measure_steps(), 10001000);
}
