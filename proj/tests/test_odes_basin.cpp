#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "nldm/basin.hpp"
#include "nldm/identify.hpp"
#include "nldm/odes.hpp"
#include "oracles.hpp"

using namespace nldm;

namespace {

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Vector v3(double a, double b, double c) {
  Vector v(3);
  v << a, b, c;
  return v;
}

/// Max-abs error of an LHO run from (0, 2) against exp(A t) x0.
double lho_error(const IntegratorSettings& s) {
  const auto sys = make_system(SystemId::LHO);
  const Vector x0 = v2(0, 2);
  const Trajectory t = integrate(sys, x0, 0, 10, 1001, s);
  const Matrix a = oracle::lho_matrix(1.0);
  double worst = 0;
  for (Eigen::Index k = 0; k < t.size(); ++k) {
    const Vector exact = oracle::expm(a * t.time(k)) * x0;
    worst = std::max(worst, (t.state(k) - exact).cwiseAbs().maxCoeff());
  }
  return worst;
}

GridSpec window(double xl, double xh, double yl, double yh, int res) {
  GridSpec g;
  g.x_lo = xl, g.x_hi = xh, g.y_lo = yl, g.y_hi = yh, g.resolution = res;
  return g;
}

BasinGrid hand_grid(int res, std::vector<int> labels) {
  return BasinGrid{window(0, 1, 0, 1, res), std::move(labels), BasinGrid::Source::integrator, {"a", "b"}, ""};
}

}  // namespace

// --- integrator ---------------------------------------------------------------

TEST(Integrate, LinearOscillatorMatchesMatrixExponential) {
  EXPECT_LE(lho_error({}), 1e-7);
}

TEST(Integrate, TighterToleranceReducesError) {
  IntegratorSettings loose, tight;
  loose.rel_tol = 1e-5, loose.abs_tol = 1e-8;
  tight.rel_tol = loose.rel_tol / 2, tight.abs_tol = loose.abs_tol / 2;
  IntegratorSettings tighter;
  tighter.rel_tol = 1e-8, tighter.abs_tol = 1e-11;
  const double e_loose = lho_error(loose), e_tight = lho_error(tight), e_tighter = lho_error(tighter);
  EXPECT_LT(e_tight, e_loose);
  EXPECT_LT(e_tighter, e_tight);
}

TEST(Integrate, UniformSamplingGrid) {
  const Trajectory t = integrate(make_system(SystemId::LHO), v2(1, 0), 2.0, 5.0, 31);
  EXPECT_EQ(t.size(), 31);
  EXPECT_DOUBLE_EQ(t.dt(), 0.1);
  EXPECT_DOUBLE_EQ(t.t0(), 2.0);
  EXPECT_EQ(t.state(0), v2(1, 0));
}

TEST(Integrate, TwoAttractorRightHalfPlaneReachesRightSink) {
  const Trajectory t = integrate(make_system(SystemId::TwoAttractor), v2(0.5, 1), 0, 20, 2001);
  EXPECT_LE((t.state(t.size() - 1) - v2(1, 0)).norm(), 1e-6);
}

TEST(Integrate, DualLimitCycleInnerRegionDecaysToOrigin) {
  const Trajectory t =
      integrate(make_system(SystemId::DualLimitCycle), v2(0.5 * std::cos(1.0), 0.5 * std::sin(1.0)), 0, 10, 1001);
  double prev = 0.5;
  for (Eigen::Index k = 1; k < t.size(); ++k) {
    const double r = t.state(k).norm();
    EXPECT_LE(r, prev + 1e-12) << "k=" << k;
    prev = r;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Integrate, DualLimitCycleMiddleRegionReachesOuterCycle) {
  const Trajectory t = integrate(make_system(SystemId::DualLimitCycle), v2(1.5, 0), 0, 10, 1001);
  EXPECT_NEAR(t.state(t.size() - 1).norm(), 2.0, 1e-6);
}

TEST(Integrate, MeanFieldCylinderSettlesOnPeriodicOrbit) {
  const auto sys = make_system(SystemId::MFCD);
  const Trajectory t = integrate(sys, v3(0.1, 0.1, 0.2), 0, 150, 3001);
  for (Eigen::Index k = 2800; k < t.size(); ++k) {
    const auto x = t.state(k);
    const double r2 = x[0] * x[0] + x[1] * x[1];
    EXPECT_NEAR(x[2], 1.0, 1e-4);
    EXPECT_NEAR(r2, x[2], 1e-4);
  }
  ASSERT_EQ(sys.attractors.size(), 1u);
  EXPECT_EQ(sys.attractors[0].kind, Attractor::Kind::cycle);
  EXPECT_DOUBLE_EQ(sys.attractors[0].radius, 1.0);
}

TEST(Integrate, LorenzStaysBounded) {
  const Trajectory t = integrate(make_system(SystemId::Lorenz), v3(5, 1, 6), 0, 10, 4000);
  EXPECT_TRUE(t.states().allFinite());
  EXPECT_LT(t.states().cwiseAbs().maxCoeff(), 100.0);
}

TEST(Integrate, DampedSpringEnergyIsNonIncreasing) {
  for (const Vector& x0 : {v2(2, 0), v2(-1, 1.5), v2(0.3, -2)}) {
    const Trajectory t = integrate(make_system(SystemId::DNLS), x0, 0, 10, 1001);
    auto energy = [&](Eigen::Index k) {
      const double x = t.state(k)[0], y = t.state(k)[1];
      return x * x * x * x / 4.0 + y * y / 2.0;
    };
    for (Eigen::Index k = 1; k < t.size(); ++k) EXPECT_LE(energy(k), energy(k - 1) + 1e-9);
  }
}

TEST(Integrate, Errors) {
  const auto sys = make_system(SystemId::LHO);
  EXPECT_THROW(integrate(sys, v2(1, 0), 1, 1, 10), ValidationError);
  EXPECT_THROW(integrate(sys, v2(1, 0), 0, 1, 1), ValidationError);
  EXPECT_THROW(integrate(sys, v3(1, 0, 0), 0, 1, 10), Error);
  IntegratorSettings bad;
  bad.rel_tol = 0;
  EXPECT_THROW(integrate(sys, v2(1, 0), 0, 1, 10, bad), ValidationError);
  Vector nan = v2(std::nan(""), 0);
  EXPECT_THROW(integrate(sys, nan, 0, 1, 10), ValidationError);
}

TEST(Integrate, BlowUpRaisesIntegrationError) {
  // x' = x - x^3 from far away is fine; y' = -y backwards in time is not, so
  // use the Lorenz system with an absurd rho to force a step-size collapse.
  const auto sys = make_system(SystemId::Lorenz, {{"rho", 1e12}, {"sigma", 1e12}});
  IntegratorSettings s;
  s.max_steps = 10'000;
  EXPECT_THROW(integrate(sys, v3(1, 1, 1), 0, 10, 10, s), IntegrationError);
}

// --- catalog -----------------------------------------------------------------

TEST(Catalog, DefaultParameters) {
  EXPECT_EQ(make_system(SystemId::LHO).params.at("delta"), 1.0);
  const auto dw = make_system(SystemId::DoubleWell);
  EXPECT_EQ(dw.params.at("delta"), 0.5);
  EXPECT_EQ(dw.params.at("lambda"), 1.3);
  const auto mf = make_system(SystemId::MFCD);
  EXPECT_EQ(mf.params.at("mu"), 0.1);
  EXPECT_EQ(mf.params.at("omega"), 2.0);
  EXPECT_EQ(mf.params.at("lambda"), 6.0);
  EXPECT_EQ(mf.params.at("A"), -0.1);
  EXPECT_EQ(mf.state_dim, 3);
  const auto lz = make_system(SystemId::Lorenz);
  EXPECT_EQ(lz.params.at("rho"), 28.0);
}

TEST(Catalog, PointAttractorsAreEquilibria) {
  for (SystemId id : kAllSystems) {
    const auto sys = make_system(id);
    for (const auto& a : sys.attractors) {
      if (a.kind != Attractor::Kind::point) continue;
      EXPECT_LE(sys.eval(a.location).cwiseAbs().maxCoeff(), 1e-12) << to_string(id) << " " << a.name;
    }
  }
  const auto dw = make_system(SystemId::DoubleWell);
  EXPECT_NEAR(dw.attractors[0].location[0], -1.8427, 1e-4);
  EXPECT_NEAR(dw.attractors[1].location[0], 0.5427, 1e-4);
}

TEST(Catalog, NamesRoundTripAndUnknownParameterRejected) {
  for (SystemId id : kAllSystems) EXPECT_EQ(parse_system_id(to_string(id)), id);
  EXPECT_FALSE(parse_system_id("Duffing"));
  EXPECT_THROW(make_system(SystemId::LHO, {{"omega", 2.0}}), ConfigError);
  EXPECT_EQ(make_system(SystemId::LHO, {{"delta", 0.2}}).params.at("delta"), 0.2);
}

// --- noise -------------------------------------------------------------------

TEST(Noise, ZeroSigmaIsBitIdentical) {
  const Trajectory t = integrate(make_system(SystemId::LHO), v2(0, 2), 0, 10, 200);
  const Trajectory n = add_noise(t, 0.0, 99);
  EXPECT_EQ(std::memcmp(t.states().data(), n.states().data(), sizeof(double) * t.states().size()), 0);
}

TEST(Noise, SameSeedReproducesDifferentSeedDiffers) {
  const Trajectory t = integrate(make_system(SystemId::LHO), v2(0, 2), 0, 10, 200);
  const Trajectory a = add_noise(t, 0.5, 7), b = add_noise(t, 0.5, 7), c = add_noise(t, 0.5, 8);
  EXPECT_EQ(std::memcmp(a.states().data(), b.states().data(), sizeof(double) * a.states().size()), 0);
  EXPECT_NE(a.states(), c.states());
}

TEST(Noise, ConstantChannelUntouched) {
  Matrix s(2, 100);
  for (int k = 0; k < 100; ++k) s.col(k) << k, 3.0;
  const Trajectory n = add_noise(Trajectory(s, 0.1), 5.0, 1);
  EXPECT_TRUE((n.states().row(1).array() == 3.0).all());
  EXPECT_NE(n.states().row(0), s.row(0));
}

TEST(Noise, EmpiricalStandardDeviation) {
  const int k = 100'000;
  Matrix s(1, k);
  for (int i = 0; i < k; ++i) s(0, i) = 10.0 * i / (k - 1);  // range 10
  const Trajectory n = add_noise(Trajectory(s, 0.1), 0.1, 2024);
  const Eigen::ArrayXd e = (n.states().row(0) - s.row(0)).transpose().array();
  const double sd = std::sqrt((e - e.mean()).square().mean());
  EXPECT_NEAR(sd, 0.01, 0.03 * 0.01);
  EXPECT_THROW(add_noise(Trajectory(s, 0.1), -1.0, 1), ValidationError);
}

// --- basin -------------------------------------------------------------------

TEST(Basin, TruthGridExamples) {
  const auto two = make_system(SystemId::TwoAttractor);
  const BasinGrid g = ground_truth_grid(two, window(-0.5, 0.5, -1, 0.3, 2));
  EXPECT_EQ(g.at(0, 1), 0);  // (-0.5, 0.3) -> (-1, 0)
  EXPECT_EQ(g.at(1, 0), 1);  // (0.5, -1) -> (1, 0)
  EXPECT_EQ(g.labels.size(), 4u);

  const auto dlc = make_system(SystemId::DualLimitCycle);
  const BasinGrid c = ground_truth_grid(dlc, window(1.5, 2.5, 0, 1, 2));
  EXPECT_EQ(c.at(0, 0), 1);  // r = 1.5 -> cycle r = 2
  EXPECT_EQ(dlc.attractors[1].name, "cycle_r2");
}

TEST(Basin, TwoAttractorTruthIsMirrorAntisymmetric) {
  const int res = 21;
  const BasinGrid g = ground_truth_grid(make_system(SystemId::TwoAttractor), window(-3, 3, -3, 3, res));
  for (int j = 0; j < res; ++j) {
    for (int i = 0; i < res / 2; ++i) {
      EXPECT_EQ(g.at(i, j), 0) << i << "," << j;
      EXPECT_EQ(g.at(res - 1 - i, j), 1) << i << "," << j;
    }
    EXPECT_NE(g.at(res / 2, j), 0);  // the line x = 0 belongs to neither sink
    EXPECT_NE(g.at(res / 2, j), 1);
  }
}

TEST(Basin, RefinementKeepsSharedNodeLabels) {
  const auto sys = make_system(SystemId::DualLimitCycle);
  const BasinGrid coarse = ground_truth_grid(sys, window(-3, 3, -3, 3, 5));
  const BasinGrid fine = ground_truth_grid(sys, window(-3, 3, -3, 3, 9));
  for (int j = 0; j < 5; ++j) {
    for (int i = 0; i < 5; ++i) EXPECT_EQ(coarse.at(i, j), fine.at(2 * i, 2 * j));
  }
}

TEST(Basin, OperatorCellsAreIndependent) {
  const auto sys = make_system(SystemId::TwoAttractor);
  std::vector<Trajectory> data;
  for (const Vector& ic : {v2(-0.5, 2), v2(0.5, -2), v2(-2.5, 1), v2(2.5, -1)}) {
    data.push_back(integrate(sys, ic, 0, 10, 1000));
  }
  TrainOptions to;
  to.rcond = 1e-9;
  const auto op = train(data, FeatureConfig(2, 2, 3), to).op;
  OperatorGridOptions o;
  o.steps = 300;
  o.threads = 4;
  const GridSpec spec = window(-2, 2, -2, 2, 9);
  const BasinGrid g = operator_grid(op, sys, spec, o);
  for (int j = 0; j < 9; ++j) {
    for (int i = 0; i < 9; ++i) {
      const Matrix seeds = Vector(v2(spec.x(i), spec.y(j))).replicate(1, 2);
      const auto p = predict(op, seeds, o.steps);
      EXPECT_EQ(g.at(i, j), classify(sys.attractors, p.trajectory.states(), o.capture));
    }
  }
  o.threads = 1;
  EXPECT_EQ(operator_grid(op, sys, spec, o).labels, g.labels);
  EXPECT_EQ(g.at(8, 4), 1);
  EXPECT_EQ(g.at(0, 4), 0);
}

TEST(Basin, DivergingOperatorLabelsCells) {
  Matrix lambda = 2.0 * Matrix::Identity(2, 2);
  const LearnedOperator op(lambda, FeatureConfig(2, 1, 1), 0.01);
  const BasinGrid g = operator_grid(op, make_system(SystemId::TwoAttractor), window(0.5, 1, 0.5, 1, 2));
  for (int l : g.labels) EXPECT_EQ(l, kDivergedLabel);
}

TEST(Basin, Preconditions) {
  const auto sys = make_system(SystemId::TwoAttractor);
  EXPECT_THROW(ground_truth_grid(sys, window(-1, 1, -1, 1, 1)), ValidationError);
  EXPECT_THROW(ground_truth_grid(sys, window(-1, 1, -1, 1, 0)), ValidationError);
  EXPECT_THROW(ground_truth_grid(sys, window(1, -1, -1, 1, 3)), ValidationError);
  EXPECT_THROW(ground_truth_grid(make_system(SystemId::Lorenz), window(-1, 1, -1, 1, 3)), ValidationError);
  const LearnedOperator op(Matrix::Zero(3, 3), FeatureConfig(3, 1, 1), 0.1);
  EXPECT_THROW(operator_grid(op, sys, window(-1, 1, -1, 1, 3)), DimensionError);
}

TEST(Basin, AgreementIdentityCheckerboardAndMismatch) {
  const BasinGrid a = hand_grid(2, {0, 1, 1, 0}), b = hand_grid(2, {1, 0, 0, 1});
  EXPECT_EQ(grid_agreement(a, a).fraction_agree, 1.0);
  const auto ab = grid_agreement(a, b);
  EXPECT_EQ(ab.fraction_agree, 0.0);
  EXPECT_EQ(ab.compared_cells, 4);
  EXPECT_EQ((ab.confusion.at({0, 1})), 2);
  const BasinGrid u = hand_grid(2, {kUnresolved, 1, kUnresolved, 0});
  const BasinGrid w = hand_grid(2, {kUnresolved, 1, 0, 1});
  const auto uw = grid_agreement(u, w);
  EXPECT_EQ(uw.compared_cells, 3);
  EXPECT_DOUBLE_EQ(uw.fraction_agree, 1.0 / 3.0);
  EXPECT_THROW(grid_agreement(a, hand_grid(3, std::vector<int>(9, 0))), IncompatibleError);
}

TEST(Basin, ClassifierCaptureRules) {
  const auto sys = make_system(SystemId::TwoAttractor);
  Matrix near = Vector(v2(1.01, 0)).replicate(1, 12);
  EXPECT_EQ(classify(sys.attractors, near, {}), 1);
  EXPECT_EQ(classify(sys.attractors, near.leftCols(9), {}), kUnresolved);
  near(0, 3) = std::nan("");
  EXPECT_EQ(classify(sys.attractors, near, {}), kDivergedLabel);
}
