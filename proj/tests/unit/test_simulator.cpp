#include "support.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

using namespace dmet;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

EnergyLandscape two_wells(int d = 2) {
  Vector a = Vector::Zero(d), b = Vector::Zero(d);
  a[0] = 2.0;
  b[0] = -2.0;
  return EnergyLandscape::wells({a, b}, {1.0, 1.5}, {0.8, 1.0});
}

IntegratorConfig deterministic(double dt, std::size_t steps, Vector initial) {
  IntegratorConfig c;
  c.dt = dt;
  c.steps = steps;
  c.initial = std::move(initial);
  return c;
}

}  // namespace

TEST(Gradient, QuadraticExamples) {
  const auto q = EnergyLandscape::quadratic(2.0, Vector::Zero(2));
  EXPECT_EQ(grad_energy(q, vec({1, 0})), vec({2, 0}));
  EXPECT_EQ(grad_energy(q, Vector::Zero(2)), Vector::Zero(2));
  EXPECT_THROW(grad_energy(q, Vector::Zero(3)), ValidationError);
}

TEST(Gradient, MatchesFiniteDifferences) {
  const std::vector<EnergyLandscape> landscapes{EnergyLandscape::quadratic(1.7, vec({0.5, -1, 2})), two_wells(3)};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (const auto& L : landscapes)
    for (int trial = 0; trial < 20; ++trial) {
      const Vector h = vec({u(rng), u(rng), u(rng)});
      const Vector fd = oracle::fd_gradient([&](const Vector& x) { return L.value(x); }, h);
      const Vector g = grad_energy(L, h);
      EXPECT_LT((g - fd).norm(), 1e-5 * std::max(1.0, g.norm()));
    }
}

TEST(Gradient, HessianMatchesGradientDifferences) {
  const EnergyLandscape L = two_wells(3);
  const Vector h = vec({0.3, 0.4, -0.2});
  const Matrix J = finite_difference_jacobian([&](const Vector& x) { return L.gradient(x); }, h);
  EXPECT_LT((J - L.hessian(h)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Landscape, Validation) {
  EXPECT_THROW(EnergyLandscape::quadratic(0.0, Vector::Zero(2)), ValidationError);
  EXPECT_THROW(EnergyLandscape::wells({}, {}, {}), ValidationError);
  EXPECT_THROW(EnergyLandscape::wells({Vector::Zero(2)}, {1.0}, {0.0}), ValidationError);
  EXPECT_THROW(EnergyLandscape::wells({Vector::Zero(2)}, {1.0, 2.0}, {1.0}), ValidationError);
}

TEST(EulerStep, ClosedForms) {
  Rng rng(0);
  const auto q = EnergyLandscape::quadratic(3.0, Vector::Zero(2));
  const Vector h = vec({1.0, -2.0});
  EXPECT_LT((euler_step(h, q, ContextForce{}, 0, 0.1, 0.0, kInfinity, rng) - 0.7 * h).norm(), 1e-15);
  // V == 0 cannot be expressed directly; a quadratic centered on the state has zero gradient there.
  const auto flat_here = EnergyLandscape::quadratic(1.0, h);
  const ContextForce c(ConstantForce{vec({0.5, 0.25})});
  EXPECT_LT((euler_step(h, flat_here, c, 0, 0.2, 0.0, kInfinity, rng) - (h + 0.2 * vec({0.5, 0.25}))).norm(), 1e-15);
  EXPECT_LT((euler_step(h, q, ContextForce{}, 0, 1e-9, 0.0, kInfinity, rng) - h).norm(), 1e-8);
  EXPECT_THROW(euler_step(h, q, ContextForce{}, 0, 0.0, 0.0, kInfinity, rng), ValidationError);
}

TEST(EulerStep, NoiseIsClampedToRadius) {
  Rng rng(3);
  const auto q = EnergyLandscape::quadratic(1.0, Vector::Zero(4));
  const double radius = noise_clamp_radius(4, 0.3);
  for (int i = 0; i < 200; ++i) {
    const Vector next = euler_step(Vector::Zero(4), q, ContextForce{}, 0, 0.04, 1.0, radius, rng);
    EXPECT_LE(next.norm(), 0.2 * radius + 1e-12);
  }
  EXPECT_TRUE(std::isinf(noise_clamp_radius(4, 1.0)));
  EXPECT_LT(noise_clamp_radius(4, 0.3), noise_clamp_radius(4, 0.8));
}

TEST(Simulate, QuadraticClosedForm) {
  const auto q = EnergyLandscape::quadratic(1.0, Vector::Zero(2));
  const Trajectory t = simulate(q, ContextForce{}, deterministic(0.1, 10, vec({1, 0})));
  ASSERT_EQ(t.states.size(), 11u);
  EXPECT_NEAR(t.states.back()[0], std::pow(0.9, 10), 1e-14);
  for (std::size_t i = 0; i < t.states.size(); ++i) EXPECT_NEAR(t.states[i][0], std::pow(0.9, static_cast<double>(i)), 1e-14);
  EXPECT_EQ(t.meta.temperature, 0.0);
}

TEST(Simulate, EndsInNearestBasin) {
  const EnergyLandscape L = two_wells();
  const Vector a = vec({2, 0});
  int inside = 0;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.3);
  for (int i = 0; i < 40; ++i) {
    const Vector h0 = a + vec({n(rng), n(rng)});
    const Trajectory t = simulate(L, ContextForce{}, deterministic(0.05, 400, h0));
    if ((t.states.back() - a).norm() < 0.8) ++inside;
  }
  EXPECT_GE(inside, 38);
}

TEST(Simulate, DivergesPastStepBound) {
  const auto q = EnergyLandscape::quadratic(2.0, Vector::Zero(2));
  try {
    simulate(q, ContextForce{}, deterministic(2.5 / 2.0, 200, vec({1, 1})));
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
  }
}

TEST(Simulate, SeedDeterminism) {
  const EnergyLandscape L = two_wells(3);
  IntegratorConfig c = deterministic(0.05, 50, vec({0.1, 0.2, 0.3}));
  c.noise_temperature = 0.8;
  c.clamp_p = 0.6;
  c.seed = 77;
  const Trajectory a = simulate(L, ContextForce{}, c), b = simulate(L, ContextForce{}, c);
  for (std::size_t i = 0; i < a.states.size(); ++i) EXPECT_EQ(a.states[i], b.states[i]);
  c.seed = 78;
  const Trajectory d = simulate(L, ContextForce{}, c);
  EXPECT_NE(a.states.back(), d.states.back());
}

TEST(Simulate, ScriptedForceNeedsEnoughInputs) {
  const auto q = EnergyLandscape::quadratic(1.0, Vector::Zero(2));
  const ContextForce f(ScriptedForce{{vec({1, 0}), vec({0, 1})}, 1.0});
  EXPECT_THROW(simulate(q, f, deterministic(0.1, 3, vec({0, 0}))), ValidationError);
  const Trajectory t = simulate(q, f, deterministic(0.1, 2, vec({0, 0})));
  EXPECT_LT((t.states[1] - vec({0.1, 0})).norm(), 1e-15);
}

TEST(Rk4, QuadraticMatchesExponential) {
  const double lambda = 1.3;
  const auto q = EnergyLandscape::quadratic(lambda, Vector::Zero(2));
  const Vector h0 = vec({1.0, -0.5});
  const Trajectory t = rk4_reference(q, ContextForce{}, deterministic(0.01, 200, h0));
  for (std::size_t i = 0; i < t.states.size(); ++i)
    EXPECT_LT((t.states[i] - std::exp(-lambda * 0.01 * static_cast<double>(i)) * h0).norm(), 1e-8);
}

TEST(Rk4, ZeroDynamicsIsConstant) {
  const Vector h0 = vec({0.5, 0.5});
  const auto flat_here = EnergyLandscape::quadratic(1.0, h0);
  const Trajectory t = rk4_reference(flat_here, ContextForce{}, deterministic(0.1, 20, h0));
  for (const auto& h : t.states) EXPECT_EQ(h, h0);
}

TEST(Rk4, LinearForceMatchesMatrixExponential) {
  const auto q = EnergyLandscape::quadratic(1.0, Vector::Zero(3));
  Matrix A(3, 3);
  A << 0.1, -0.8, 0.0, 0.8, 0.1, 0.2, 0.0, -0.2, -0.3;
  const ContextForce f(LinearForce{A, Vector::Zero(3)});
  const Vector h0 = vec({1, 0.5, -1});
  const Trajectory t = rk4_reference(q, f, deterministic(0.01, 300, h0));
  const Matrix S = A - Matrix::Identity(3, 3);
  for (std::size_t i = 0; i < t.states.size(); i += 30) {
    const Matrix E = (S * (0.01 * static_cast<double>(i))).exp();
    EXPECT_LT((t.states[i] - E * h0).norm(), 1e-6);
  }
}

TEST(Rk4, RejectsNoise) {
  IntegratorConfig c = deterministic(0.1, 5, vec({1, 1}));
  c.noise_temperature = 0.1;
  EXPECT_THROW(rk4_reference(EnergyLandscape::quadratic(1.0, Vector::Zero(2)), ContextForce{}, c), ValidationError);
}

TEST(ErrorOrder, FirstOrderOnQuadraticAndWells) {
  const std::vector<double> dts{0.1, 0.05, 0.025};
  const ErrorOrder q = empirical_error_order(EnergyLandscape::quadratic(1.0, Vector::Zero(2)), ContextForce{}, vec({1, 1}), dts);
  EXPECT_NEAR(q.slope, 1.0, 0.2);
  const ErrorOrder w = empirical_error_order(two_wells(), ContextForce{}, vec({0.5, 0.7}), dts);
  EXPECT_NEAR(w.slope, 1.0, 0.3);
  for (std::size_t i = 1; i < q.errors.size(); ++i) EXPECT_LT(q.errors[i], q.errors[i - 1]);
}

TEST(ErrorOrder, GridValidation) {
  const auto q = EnergyLandscape::quadratic(1.0, Vector::Zero(2));
  EXPECT_THROW(empirical_error_order(q, ContextForce{}, vec({1, 1}), {0.1, 0.1, 0.1}), ValidationError);
  EXPECT_THROW(empirical_error_order(q, ContextForce{}, vec({1, 1}), {0.1, 0.05}), ValidationError);
  const ContextForce scripted(ScriptedForce{std::vector<Vector>(100, vec({0, 0})), 1.0});
  EXPECT_THROW(empirical_error_order(q, scripted, vec({1, 1}), {0.1, 0.05, 0.025}), ValidationError);
}

TEST(Lyapunov, ConvexCaseStrictlyDecreases) {
  const auto q = EnergyLandscape::quadratic(1.0, Vector::Zero(2));
  const Trajectory t = simulate(q, ContextForce{}, deterministic(0.1, 30, vec({1, -1})));
  const LyapunovTrace tr = lyapunov_trace(t, q, ContextForce{}, {Matrix::Identity(2, 2), Vector::Zero(2)});
  for (std::size_t i = 0; i < tr.delta_L.size(); ++i) {
    EXPECT_TRUE(tr.condition_held[i]);
    EXPECT_LT(tr.delta_L[i], 0.0);
  }
  EXPECT_EQ(tr.fraction_decreasing, 1.0);
}

TEST(Lyapunov, ForceCancellingGradientIsBoundary) {
  const auto q = EnergyLandscape::quadratic(1.0, Vector::Zero(2));
  // g(h) = +grad V(h) = h, so the drift vanishes.
  const ContextForce g(LinearForce{Matrix::Identity(2, 2), Vector::Zero(2)});
  const Trajectory t = simulate(q, g, deterministic(0.1, 10, vec({1, 2})));
  const LyapunovTrace tr = lyapunov_trace(t, q, g, {Matrix::Identity(2, 2), Vector::Zero(2)});
  for (std::size_t i = 0; i < tr.delta_L.size(); ++i) {
    EXPECT_TRUE(tr.boundary[i]);
    EXPECT_NEAR(tr.delta_L[i], 0.0, 1e-12);
  }
}

TEST(Lyapunov, StartAtEquilibrium) {
  const auto q = EnergyLandscape::quadratic(1.0, vec({1, 1}));
  const Trajectory t = simulate(q, ContextForce{}, deterministic(0.1, 10, vec({1, 1})));
  for (double L : lyapunov_trace(t, q, ContextForce{}, {Matrix::Identity(2, 2), vec({1, 1})}).L) EXPECT_EQ(L, 0.0);
}

TEST(Lyapunov, MetricMustBeSpd) {
  const auto q = EnergyLandscape::quadratic(1.0, Vector::Zero(2));
  const Trajectory t = simulate(q, ContextForce{}, deterministic(0.1, 3, vec({1, 1})));
  Matrix M(2, 2);
  M << 1, 0.5, 0, 1;
  EXPECT_THROW(lyapunov_trace(t, q, ContextForce{}, {M, Vector::Zero(2)}), ValidationError);
  M << 1, 0, 0, -1;
  EXPECT_THROW(lyapunov_trace(t, q, ContextForce{}, {M, Vector::Zero(2)}), ValidationError);
}

TEST(Stability, QuadraticCertificate) {
  const auto q = EnergyLandscape::quadratic(1.0, Vector::Zero(2));
  const Trajectory t = simulate(q, ContextForce{}, deterministic(0.5, 40, vec({3, -2})));
  const StabilityCertificate cert = check_discrete_stability(t, q, ContextForce{}, 0.5);
  EXPECT_TRUE(cert.stable());
  EXPECT_EQ(cert.fraction_energy_nonincreasing, 1.0);
  EXPECT_FALSE(check_discrete_stability(t, q, ContextForce{}, 2.5).stable());
}

TEST(Stability, WellsWithWeakPull) {
  const EnergyLandscape L = two_wells();
  const ContextForce pull(PullForce{vec({2, 0}), 0.05});
  const Trajectory t = simulate(L, pull, deterministic(0.02, 300, vec({1.2, 0.6})));
  const StabilityCertificate cert = check_discrete_stability(t, L, pull, 0.02);
  EXPECT_TRUE(cert.step_size_ok);
  EXPECT_TRUE(cert.alignment_all);
  EXPECT_GE(cert.fraction_energy_nonincreasing, 0.99);
}

TEST(ResidualSweep, ContractionDecreasesWithAlpha) {
  const ResidualSweep s = residual_sweep({0.5, 0.7, 0.9}, -0.1 * Matrix::Identity(2, 2), vec({1, 0}), 10);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s.continuity[i], oracle::residual_continuity(s.alphas[i], 1.0, 10), 1e-12);
  EXPECT_GT(s.continuity[0], s.continuity[1]);
  EXPECT_GT(s.continuity[1], s.continuity[2]);
}

TEST(ResidualSweep, TrivialMaps) {
  const Matrix zero = Matrix::Zero(2, 2);
  EXPECT_EQ(residual_sweep({1.0}, zero, vec({1, 0}), 5).continuity[0], 0.0);
  EXPECT_NEAR(residual_sweep({0.0}, zero, vec({3, 4}), 5).continuity[0], 5.0 / 5.0, 1e-15);
  EXPECT_THROW(residual_sweep({1.5}, zero, vec({1, 0}), 5), ValidationError);
  EXPECT_THROW(residual_sweep({1.0}, 2.0 * Matrix::Identity(2, 2), vec({1, 0}), 40), DivergenceError);
}

TEST(Adaptive, StepIsGammaOverSigma) {
  const auto q = EnergyLandscape::quadratic(1.0, vec({-2, 2}));
  IntegratorConfig base = deterministic(1.0, 1, vec({-2, 2}));
  const AdaptiveTrajectory a = adaptive_simulate({0.2, {}}, q, ContextForce{}, base);
  EXPECT_DOUBLE_EQ(a.sigma[0], 2.0);
  EXPECT_DOUBLE_EQ(a.dt_eff[0], 0.1);
}

TEST(Adaptive, DegenerateStateRejected) {
  const auto q = EnergyLandscape::quadratic(1.0, Vector::Zero(3));
  try {
    adaptive_simulate({0.1, {}}, q, ContextForce{}, deterministic(1.0, 5, Vector::Ones(3)));
    FAIL() << "expected DegenerateError";
  } catch (const DegenerateError& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate state statistics"), std::string::npos);
  }
}

TEST(Adaptive, BoundSeparatesStableFromDivergent) {
  // Center with coordinate spread 5 so sigma_t stays near 5 along the run.
  const double lambda = 1.0;
  const auto q = EnergyLandscape::quadratic(lambda, vec({0, 10}));
  const IntegratorConfig base = deterministic(1.0, 60, vec({0.5, 11}));
  const double bound = adaptive_stability_bound(5.0, lambda);
  EXPECT_DOUBLE_EQ(bound, 10.0);

  const AdaptiveTrajectory ok = adaptive_simulate({0.2 * bound, {}}, q, ContextForce{}, base);
  const double sigma_min = *std::min_element(ok.sigma.begin(), ok.sigma.end());
  EXPECT_LT(0.2 * bound, adaptive_stability_bound(sigma_min, lambda));
  const StabilityCertificate cert = check_discrete_stability(ok.trajectory, q, ContextForce{}, 1e-3);
  EXPECT_EQ(cert.fraction_energy_nonincreasing, 1.0);

  // Past the bound the energy rises; sigma_t grows with the error, so the run oscillates instead of blowing up.
  const AdaptiveTrajectory bad = adaptive_simulate({3.0 * bound, {}}, q, ContextForce{}, base);
  EXPECT_LT(check_discrete_stability(bad.trajectory, q, ContextForce{}, 1e-3).fraction_energy_nonincreasing, 1.0);
}

TEST(Adaptive, BetaShiftsEveryStep) {
  const auto q = EnergyLandscape::quadratic(1.0, vec({-1, 1}));
  const AdaptiveTrajectory a = adaptive_simulate({0.1, vec({0.5, 0.0})}, q, ContextForce{}, deterministic(1.0, 1, vec({-1, 1})));
  EXPECT_LT((a.trajectory.states[1] - vec({-0.5, 1})).norm(), 1e-15);
}

TEST(Symmetry, GradientFieldsAreSymmetric) {
  const auto q = EnergyLandscape::quadratic(2.0, vec({1, -1, 0.5}));
  EXPECT_LT(jacobian_symmetry_defect(drift_field(q, ContextForce{}), vec({0.3, 0.2, -0.4})), 1e-6);
  const EnergyLandscape w = two_wells(3);
  EXPECT_LT(jacobian_symmetry_defect(drift_field(w, ContextForce{}), vec({0.3, 0.2, -0.4})), 1e-4);
}

TEST(Symmetry, RotationalField) {
  auto rot = [](const Vector& h) { return vec({-h[1], h[0]}); };
  EXPECT_NEAR(jacobian_symmetry_defect(rot, vec({0.7, -0.3})), std::sqrt(2.0), 1e-8);
}

TEST(Synthesize, SmallGridDeterministic) {
  SimulatorConfig c = default_simulator_config();
  c.temperatures = {0.2, 1.0};
  c.top_ps = {0.5, 1.0};
  c.samples_per_cell = 3;
  c.steps = 40;
  c.seed = 5;
  const Dataset a = synthesize_dataset(c), b = synthesize_dataset(c);
  ASSERT_EQ(a.trajectories.size(), 12u);
  EXPECT_EQ(a.grid.size(), 4u);
  EXPECT_NO_THROW(validate(a));
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
    EXPECT_EQ(a.trajectories[i].meta.sample_id, b.trajectories[i].meta.sample_id);
    EXPECT_EQ(a.trajectories[i].states.back(), b.trajectories[i].states.back());
    EXPECT_EQ(a.trajectories[i].quality, b.trajectories[i].quality);
    ASSERT_TRUE(a.trajectories[i].quality);
  }
  EXPECT_NE(a.trajectories[0].states.back(), a.trajectories[1].states.back());
}

TEST(Synthesize, DefaultGridHas400Samples) {
  SimulatorConfig c = default_simulator_config();
  c.quality.reset();
  const Dataset ds = synthesize_dataset(c);
  EXPECT_EQ(ds.trajectories.size(), 400u);
  EXPECT_EQ(ds.grid.size(), 40u);
  for (const auto& [cell, count] : ds.cell_counts()) EXPECT_EQ(count, 10u);
}

// The start sits on the saddle, so a tiny spread still picks a well; paths
// that end in the same well end together.
TEST(Synthesize, ZeroTemperatureGivesNearIdenticalPaths) {
  SimulatorConfig c = default_simulator_config();
  c.temperatures = {0.0};
  c.top_ps = {1.0};
  c.samples_per_cell = 4;
  c.initial.spread = 1e-6;
  c.quality.reset();
  const Dataset ds = synthesize_dataset(c);
  for (std::size_t i = 1; i < ds.trajectories.size(); ++i) {
    const Vector& a = ds.trajectories[i].states.back();
    const Vector& b = ds.trajectories[0].states.back();
    if ((a[0] > 0) != (b[0] > 0)) continue;
    const double gap = (a - b).norm();
    EXPECT_GT(gap, 0.0);
    EXPECT_LT(gap, 1e-3);
  }
}

TEST(Synthesize, ConfigFromJson) {
  const json j = json::parse(R"({
    "landscape": {"kind": "quadratic", "lambda": 2.0, "center": [0, 0]},
    "force": {"kind": "pull", "target": [1, 1], "gain": 0.5},
    "dt": 0.1, "steps": 20, "grid": {"temperatures": [0.5], "top_ps": [1.0]},
    "samples_per_cell": 2, "seed": 9, "quality": null})");
  const SimulatorConfig c = simulator_config_from_json(j);
  EXPECT_EQ(c.steps, 20u);
  EXPECT_EQ(c.landscape.dim(), 2);
  EXPECT_FALSE(c.quality);
  EXPECT_EQ(synthesize_dataset(c).trajectories.size(), 2u);
  json bad = j;
  bad["landscape"]["kind"] = "cubic";
  EXPECT_THROW(simulator_config_from_json(bad), Error);
}
