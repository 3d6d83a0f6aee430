#pragma once

// Synthetic controlled dynamical system dh/dt = -grad V(h) + g(h, u):
// energy landscapes, context forces, Euler / RK4 / adaptive-step
// integrators and the stability certificates checked against them.

#include "dmet/core.hpp"
#include "dmet/error.hpp"
#include "dmet/linalg.hpp"
#include "dmet/metrics.hpp"
#include "dmet/random.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <variant>
#include <vector>

namespace dmet {

// ---------------------------------------------------------------------------
// Energy landscapes

/// V(h) = lambda/2 * ||h - center||^2.
struct QuadraticWell {
  double lambda = 1.0;
  Vector center;
};

/// V(h) = -sum_i depth_i * exp(-||h - c_i||^2 / (2 width_i^2)).
struct GaussianWells {
  std::vector<Vector> centers;
  std::vector<double> depths;
  std::vector<double> widths;
};

class EnergyLandscape {
 public:
  using Kind = std::variant<QuadraticWell, GaussianWells>;

  explicit EnergyLandscape(Kind kind) : kind_(std::move(kind)) { check(); }

  static EnergyLandscape quadratic(double lambda, Vector center) { return EnergyLandscape(QuadraticWell{lambda, std::move(center)}); }
  static EnergyLandscape wells(std::vector<Vector> centers, std::vector<double> depths, std::vector<double> widths) {
    return EnergyLandscape(GaussianWells{std::move(centers), std::move(depths), std::move(widths)});
  }

  const Kind& kind() const { return kind_; }

  Eigen::Index dim() const {
    return std::visit([](const auto& k) -> Eigen::Index {
      if constexpr (std::is_same_v<std::decay_t<decltype(k)>, QuadraticWell>) return k.center.size();
      else return k.centers.front().size();
    }, kind_);
  }

  double value(const Vector& h) const {
    check_dim(h);
    if (auto* q = std::get_if<QuadraticWell>(&kind_)) return 0.5 * q->lambda * (h - q->center).squaredNorm();
    const auto& w = std::get<GaussianWells>(kind_);
    double v = 0.0;
    for (std::size_t i = 0; i < w.centers.size(); ++i)
      v -= w.depths[i] * std::exp(-(h - w.centers[i]).squaredNorm() / (2.0 * w.widths[i] * w.widths[i]));
    return v;
  }

  Vector gradient(const Vector& h) const {
    check_dim(h);
    if (auto* q = std::get_if<QuadraticWell>(&kind_)) return q->lambda * (h - q->center);
    const auto& w = std::get<GaussianWells>(kind_);
    Vector g = Vector::Zero(h.size());
    for (std::size_t i = 0; i < w.centers.size(); ++i) {
      const double s2 = w.widths[i] * w.widths[i];
      const Vector diff = h - w.centers[i];
      g += (w.depths[i] * std::exp(-diff.squaredNorm() / (2.0 * s2)) / s2) * diff;
    }
    return g;
  }

  Matrix hessian(const Vector& h) const {
    check_dim(h);
    const Eigen::Index d = h.size();
    if (auto* q = std::get_if<QuadraticWell>(&kind_)) return q->lambda * Matrix::Identity(d, d);
    const auto& w = std::get<GaussianWells>(kind_);
    Matrix H = Matrix::Zero(d, d);
    for (std::size_t i = 0; i < w.centers.size(); ++i) {
      const double s2 = w.widths[i] * w.widths[i];
      const Vector diff = h - w.centers[i];
      const double e = w.depths[i] * std::exp(-diff.squaredNorm() / (2.0 * s2));
      H += e * (Matrix::Identity(d, d) / s2 - diff * diff.transpose() / (s2 * s2));
    }
    return H;
  }

  /// Upper estimate of lambda_max(H_V): exact for the quadratic; for wells the
  /// largest Hessian eigenvalue over the well centers and the given samples.
  double hessian_bound(const std::vector<Vector>& samples = {}) const {
    if (auto* q = std::get_if<QuadraticWell>(&kind_)) return q->lambda;
    const auto& w = std::get<GaussianWells>(kind_);
    double best = -std::numeric_limits<double>::infinity();
    auto visit = [&](const Vector& h) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian(h), Eigen::EigenvaluesOnly);
      best = std::max(best, eig.eigenvalues().maxCoeff());
    };
    for (const auto& c : w.centers) visit(c);
    for (const auto& s : samples) visit(s);
    return best;
  }

 private:
  void check() const {
    if (auto* q = std::get_if<QuadraticWell>(&kind_)) {
      if (!(q->lambda > 0.0)) throw ValidationError("quadratic landscape needs lambda > 0");
      if (q->center.size() < 1) throw ValidationError("quadratic landscape needs a center");
      return;
    }
    const auto& w = std::get<GaussianWells>(kind_);
    if (w.centers.empty()) throw ValidationError("wells landscape needs at least one center");
    if (w.depths.size() != w.centers.size() || w.widths.size() != w.centers.size())
      throw ValidationError("wells landscape: centers, depths and widths must have equal length");
    for (std::size_t i = 0; i < w.centers.size(); ++i) {
      if (w.centers[i].size() != w.centers.front().size()) throw ValidationError("wells landscape: center dimensions differ");
      if (!(w.depths[i] > 0.0)) throw ValidationError("wells landscape: depths must be > 0");
      if (!(w.widths[i] > 0.0)) throw ValidationError("wells landscape: widths must be > 0");
    }
  }

  void check_dim(const Vector& h) const {
    if (h.size() != dim())
      throw ValidationError("state dimension " + std::to_string(h.size()) + " != landscape dimension " + std::to_string(dim()));
  }

  Kind kind_;
};

/// Analytic gradient of V (the drift uses its negation).
inline Vector grad_energy(const EnergyLandscape& landscape, const Vector& h) { return landscape.gradient(h); }

// ---------------------------------------------------------------------------
// Context forces g(h, u_t)

struct ZeroForce {};
struct ConstantForce {
  Vector value;
};
/// gain * (target - h)
struct PullForce {
  Vector target;
  double gain = 0.0;
};
/// gain * u_t for a scripted input sequence.
struct ScriptedForce {
  std::vector<Vector> inputs;
  double gain = 1.0;
};
/// matrix * h + offset
struct LinearForce {
  Matrix matrix;
  Vector offset;
};

class ContextForce {
 public:
  using Kind = std::variant<ZeroForce, ConstantForce, PullForce, ScriptedForce, LinearForce>;

  ContextForce() = default;
  explicit ContextForce(Kind kind) : kind_(std::move(kind)) {
    if (auto* p = std::get_if<PullForce>(&kind_); p && !std::isfinite(p->gain)) throw ValidationError("pull gain must be finite");
    if (auto* s = std::get_if<ScriptedForce>(&kind_); s && !std::isfinite(s->gain)) throw ValidationError("scripted gain must be finite");
    if (auto* l = std::get_if<LinearForce>(&kind_); l && (l->matrix.rows() != l->matrix.cols() || l->offset.size() != l->matrix.rows()))
      throw ValidationError("linear force needs a square matrix and matching offset");
  }

  const Kind& kind() const { return kind_; }

  /// Forces that do not read the scripted input u_t.
  bool time_homogeneous() const { return !std::holds_alternative<ScriptedForce>(kind_); }

  /// Scripted inputs must cover every step of a run.
  void require_steps(std::size_t steps) const {
    if (auto* s = std::get_if<ScriptedForce>(&kind_); s && s->inputs.size() < steps)
      throw ValidationError("scripted force has " + std::to_string(s->inputs.size()) + " inputs, run needs " +
                            std::to_string(steps));
  }

  Vector operator()(const Vector& h, std::size_t step) const {
    return std::visit([&](const auto& k) -> Vector {
      using K = std::decay_t<decltype(k)>;
      if constexpr (std::is_same_v<K, ZeroForce>) return Vector::Zero(h.size());
      else if constexpr (std::is_same_v<K, ConstantForce>) return k.value;
      else if constexpr (std::is_same_v<K, PullForce>) return k.gain * (k.target - h);
      else if constexpr (std::is_same_v<K, ScriptedForce>) {
        if (step >= k.inputs.size()) throw ValidationError("scripted force exhausted at step " + std::to_string(step));
        return k.gain * k.inputs[step];
      } else return k.matrix * h + k.offset;
    }, kind_);
  }

 private:
  Kind kind_ = ZeroForce{};
};

// ---------------------------------------------------------------------------
// Integrators

struct IntegratorConfig {
  double dt = 0.05;
  std::size_t steps = 100;
  /// Noise magnitude; the simulator's analogue of sampling temperature.
  double noise_temperature = 0.0;
  /// Top-p analogue: each noise draw is clamped to the radius of its p-quantile ball.
  double clamp_p = 1.0;
  std::uint64_t seed = 0;
  Vector initial;
};

inline constexpr double kDivergenceNorm = 1e6;

/// Radius r with P(||xi|| <= r) = p for a standard Gaussian xi in `dim` dimensions.
inline double noise_clamp_radius(Eigen::Index dim, double clamp_p) {
  if (!(clamp_p > 0.0 && clamp_p <= 1.0)) throw ValidationError("clamp_p must lie in (0, 1]");
  if (clamp_p >= 1.0) return std::numeric_limits<double>::infinity();
  boost::math::chi_squared chi2(static_cast<double>(dim));
  return std::sqrt(boost::math::quantile(chi2, clamp_p));
}

inline Vector drift(const EnergyLandscape& landscape, const ContextForce& force, const Vector& h, std::size_t step) {
  return -landscape.gradient(h) + force(h, step);
}

/// h + dt (-grad V(h) + g(h, u_step)) + sqrt(dt) * noise_temperature * xi,
/// xi standard Gaussian clamped to clamp_radius.
inline Vector euler_step(const Vector& h, const EnergyLandscape& landscape, const ContextForce& force, std::size_t step,
                         double dt, double noise_temperature, double clamp_radius, Rng& rng) {
  if (!(dt > 0.0)) throw ValidationError("dt must be > 0");
  Vector next = h + dt * drift(landscape, force, h, step);
  if (noise_temperature > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector xi(h.size());
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = normal(rng);
    const double r = xi.norm();
    if (r > clamp_radius) xi *= clamp_radius / r;
    next += std::sqrt(dt) * noise_temperature * xi;
  }
  return next;
}

namespace detail {

inline void check_config(const EnergyLandscape& landscape, const ContextForce& force, const IntegratorConfig& config) {
  if (!(config.dt > 0.0)) throw ValidationError("dt must be > 0");
  if (config.steps < 1) throw ValidationError("steps must be >= 1");
  if (!(config.noise_temperature >= 0.0)) throw ValidationError("noise_temperature must be >= 0");
  if (config.initial.size() != landscape.dim())
    throw ValidationError("initial state dimension " + std::to_string(config.initial.size()) + " != landscape dimension " +
                          std::to_string(landscape.dim()));
  force.require_steps(config.steps);
}

inline void guard_divergence(const Vector& h, std::size_t step) {
  if (!all_finite(h) || h.norm() > kDivergenceNorm)
    throw DivergenceError("trajectory diverged at step " + std::to_string(step) + " (check dt < 2/lambda_max)");
}

inline Trajectory make_trajectory(const IntegratorConfig& config) {
  Trajectory traj;
  traj.meta.temperature = config.noise_temperature;
  traj.meta.top_p = config.clamp_p;
  traj.meta.model_id = "simulator";
  traj.states.reserve(config.steps + 1);
  traj.states.push_back(config.initial);
  return traj;
}

}  // namespace detail

/// Euler(-Maruyama) run of `steps` steps; bit-identical for identical seeds.
inline Trajectory simulate(const EnergyLandscape& landscape, const ContextForce& force, const IntegratorConfig& config) {
  detail::check_config(landscape, force, config);
  const double radius = noise_clamp_radius(landscape.dim(), config.clamp_p);
  Rng rng(config.seed);
  Trajectory traj = detail::make_trajectory(config);
  for (std::size_t t = 0; t < config.steps; ++t) {
    Vector next = euler_step(traj.states.back(), landscape, force, t, config.dt, config.noise_temperature, radius, rng);
    detail::guard_divergence(next, t + 1);
    traj.states.push_back(std::move(next));
  }
  return traj;
}

/// Classical fourth-order Runge-Kutta on the same grid; the input u_t is held
/// constant over each step. Deterministic dynamics only.
inline Trajectory rk4_reference(const EnergyLandscape& landscape, const ContextForce& force, const IntegratorConfig& config) {
  detail::check_config(landscape, force, config);
  if (config.noise_temperature != 0.0) throw ValidationError("rk4_reference needs noise_temperature = 0");
  Trajectory traj = detail::make_trajectory(config);
  const double dt = config.dt;
  for (std::size_t t = 0; t < config.steps; ++t) {
    const Vector& h = traj.states.back();
    const Vector k1 = drift(landscape, force, h, t);
    const Vector k2 = drift(landscape, force, h + 0.5 * dt * k1, t);
    const Vector k3 = drift(landscape, force, h + 0.5 * dt * k2, t);
    const Vector k4 = drift(landscape, force, h + dt * k3, t);
    Vector next = h + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    detail::guard_divergence(next, t + 1);
    traj.states.push_back(std::move(next));
  }
  return traj;
}

struct ErrorOrder {
  std::vector<double> dts;
  /// Sup-norm distance between the Euler and RK4 trajectories for each dt.
  std::vector<double> errors;
  /// Least-squares slope of log(error) against log(dt).
  double slope = 0.0;
};

/// Euler global error against the RK4 reference over a fixed horizon, for a
/// grid where each dt halves the previous one.
inline ErrorOrder empirical_error_order(const EnergyLandscape& landscape, const ContextForce& force, const Vector& initial,
                                        const std::vector<double>& dt_list, double horizon = 2.0) {
  if (dt_list.size() < 3) throw ValidationError("error order needs at least 3 dt values");
  if (!force.time_homogeneous()) throw ValidationError("error order needs a time-homogeneous force");
  if (!(horizon > 0.0)) throw ValidationError("horizon must be > 0");
  for (std::size_t i = 1; i < dt_list.size(); ++i)
    if (std::abs(dt_list[i] - 0.5 * dt_list[i - 1]) > 1e-12 * dt_list[i - 1])
      throw ValidationError("dt grid must halve at every step");

  ErrorOrder out;
  for (double dt : dt_list) {
    const double exact_steps = horizon / dt;
    const auto steps = static_cast<std::size_t>(std::llround(exact_steps));
    if (std::abs(exact_steps - static_cast<double>(steps)) > 1e-9 * exact_steps)
      throw ValidationError("horizon must be a whole number of steps for dt=" + std::to_string(dt));
    IntegratorConfig config{.dt = dt, .steps = steps, .noise_temperature = 0.0, .clamp_p = 1.0, .seed = 0, .initial = initial};
    const Trajectory euler = simulate(landscape, force, config);
    const Trajectory ref = rk4_reference(landscape, force, config);
    double err = 0.0;
    for (std::size_t t = 0; t < euler.states.size(); ++t) err = std::max(err, (euler.states[t] - ref.states[t]).norm());
    out.dts.push_back(dt);
    out.errors.push_back(err);
  }
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(out.dts.size());
  for (std::size_t i = 0; i < out.dts.size(); ++i) {
    mx += std::log(out.dts[i]) / n;
    my += std::log(out.errors[i]) / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < out.dts.size(); ++i) {
    const double dx = std::log(out.dts[i]) - mx;
    sxy += dx * (std::log(out.errors[i]) - my);
    sxx += dx * dx;
  }
  out.slope = sxy / sxx;
  return out;
}

// ---------------------------------------------------------------------------
// Stability certificates

/// Metric matrix M of the Lyapunov function L(h) = (h - h*)^T M (h - h*).
struct LyapunovConfig {
  Matrix metric;
  Vector equilibrium;
};

struct LyapunovTrace {
  std::vector<double> L;        ///< L(h_t), t = 0..T
  std::vector<double> delta_L;  ///< L(h_{t+1}) - L(h_t)
  /// margin_t = (h-h*)^T M grad V - (h-h*)^T M g; the stability condition holds iff margin >= 0.
  std::vector<double> margin;
  std::vector<bool> condition_held;
  /// Steps where the condition holds with equality (|margin| <= tolerance).
  std::vector<bool> boundary;
  double fraction_decreasing = 0.0;
};

inline void validate(const LyapunovConfig& lyap) {
  const Matrix& M = lyap.metric;
  if (M.rows() != M.cols() || M.rows() != lyap.equilibrium.size())
    throw ValidationError("Lyapunov metric must be square and match the equilibrium dimension");
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10) throw ValidationError("Lyapunov metric is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(M, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) throw ValidationError("Lyapunov metric is not positive definite");
}

inline LyapunovTrace lyapunov_trace(const Trajectory& traj, const EnergyLandscape& landscape, const ContextForce& force,
                                    const LyapunovConfig& lyap, double tolerance = 1e-12) {
  validate(lyap);
  LyapunovTrace out;
  auto L = [&](const Vector& h) {
    const Vector e = h - lyap.equilibrium;
    return e.dot(lyap.metric * e);
  };
  for (const auto& h : traj.states) out.L.push_back(L(h));
  std::size_t decreasing = 0;
  for (std::size_t t = 0; t + 1 < traj.states.size(); ++t) {
    const Vector& h = traj.states[t];
    const Vector Me = lyap.metric * (h - lyap.equilibrium);
    const double margin = Me.dot(landscape.gradient(h)) - Me.dot(force(h, t));
    const double scale = tolerance * std::max(1.0, Me.norm() * landscape.gradient(h).norm());
    out.margin.push_back(margin);
    out.condition_held.push_back(margin >= -scale);
    out.boundary.push_back(std::abs(margin) <= scale);
    out.delta_L.push_back(out.L[t + 1] - out.L[t]);
    if (out.delta_L.back() <= 0.0) ++decreasing;
  }
  out.fraction_decreasing = out.delta_L.empty() ? 1.0 : static_cast<double>(decreasing) / static_cast<double>(out.delta_L.size());
  return out;
}

struct StabilityCertificate {
  /// grad V^T g <= ||grad V||^2 at each step.
  std::vector<bool> alignment_ok;
  bool alignment_all = true;
  double lambda_max = 0.0;
  double dt = 0.0;
  /// dt < 2 / lambda_max
  bool step_size_ok = false;
  std::vector<double> energy;
  /// Fraction of steps with V(h_{t+1}) <= V(h_t) + tolerance.
  double fraction_energy_nonincreasing = 0.0;

  bool stable() const { return alignment_all && step_size_ok; }
};

inline StabilityCertificate check_discrete_stability(const Trajectory& traj, const EnergyLandscape& landscape,
                                                     const ContextForce& force, double dt, double tolerance = 1e-9) {
  if (!(dt > 0.0)) throw ValidationError("dt must be > 0");
  StabilityCertificate cert;
  cert.dt = dt;
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    const Vector& h = traj.states[t];
    cert.energy.push_back(landscape.value(h));
    if (t + 1 == traj.states.size()) break;
    const Vector grad = landscape.gradient(h);
    const double lhs = grad.dot(force(h, t));
    const double rhs = grad.squaredNorm();
    const bool ok = lhs <= rhs + 1e-12 * std::max(1.0, rhs);
    cert.alignment_ok.push_back(ok);
    cert.alignment_all = cert.alignment_all && ok;
  }
  cert.lambda_max = landscape.hessian_bound(traj.states);
  cert.step_size_ok = cert.lambda_max <= 0.0 || dt < 2.0 / cert.lambda_max;
  std::size_t ok = 0;
  for (std::size_t t = 0; t + 1 < cert.energy.size(); ++t)
    if (cert.energy[t + 1] <= cert.energy[t] + tolerance) ++ok;
  cert.fraction_energy_nonincreasing =
      cert.energy.size() < 2 ? 1.0 : static_cast<double>(ok) / static_cast<double>(cert.energy.size() - 1);
  return cert;
}

// ---------------------------------------------------------------------------
// Residual strength sweep: h_{t+1} = alpha h_t + A h_t

struct ResidualSweep {
  std::vector<double> alphas;
  /// Raw continuity C(alpha), no normalization.
  std::vector<double> continuity;
};

inline ResidualSweep residual_sweep(const std::vector<double>& alpha_grid, const Matrix& map, const Vector& initial,
                                    std::size_t steps) {
  if (steps < 1) throw ValidationError("residual sweep needs T >= 1");
  if (map.rows() != map.cols() || map.rows() != initial.size())
    throw ValidationError("residual map must be square and match the initial state");
  ResidualSweep out;
  for (double alpha : alpha_grid) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
    Trajectory traj;
    traj.states.push_back(initial);
    for (std::size_t t = 0; t < steps; ++t) {
      const Vector& h = traj.states.back();
      Vector next = alpha * h + map * h;
      if (!all_finite(next) || next.norm() > kDivergenceNorm)
        throw DivergenceError("residual update diverged for alpha=" + std::to_string(alpha));
      traj.states.push_back(std::move(next));
    }
    out.alphas.push_back(alpha);
    out.continuity.push_back(continuity(traj, false).C);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adaptive step: dt_eff = gamma / sigma_t

struct AdaptiveStepConfig {
  double gamma = 0.1;
  /// Constant offset added to every update (zero by default).
  Vector beta;
};

struct AdaptiveTrajectory {
  Trajectory trajectory;
  std::vector<double> dt_eff;
  std::vector<double> sigma;
};

/// Population standard deviation of a state's coordinates.
inline double coordinate_std(const Vector& h) {
  const double mean = h.mean();
  return std::sqrt((h.array() - mean).square().mean());
}

/// Largest stable gamma for a given coordinate spread and curvature: sigma_min * 2 / lambda_max.
inline double adaptive_stability_bound(double sigma_min, double lambda_max) { return sigma_min * 2.0 / lambda_max; }

/// Euler run whose step is gamma / sigma_t, sigma_t the coordinate spread of
/// the current state. base.dt is ignored.
inline AdaptiveTrajectory adaptive_simulate(const AdaptiveStepConfig& adaptive, const EnergyLandscape& landscape,
                                            const ContextForce& force, const IntegratorConfig& base) {
  if (!(adaptive.gamma > 0.0)) throw ValidationError("gamma must be > 0");
  if (landscape.dim() < 2) throw ValidationError("adaptive step needs dimension >= 2");
  IntegratorConfig config = base;
  config.dt = 1.0;  // placeholder so the shared checks pass
  detail::check_config(landscape, force, config);
  const Vector beta = adaptive.beta.size() ? adaptive.beta : Vector::Zero(landscape.dim());
  if (beta.size() != landscape.dim()) throw ValidationError("beta dimension mismatch");

  const double radius = noise_clamp_radius(landscape.dim(), base.clamp_p);
  Rng rng(base.seed);
  AdaptiveTrajectory out;
  out.trajectory = detail::make_trajectory(base);
  for (std::size_t t = 0; t < base.steps; ++t) {
    const Vector& h = out.trajectory.states.back();
    const double sigma = coordinate_std(h);
    if (!(sigma > 0.0)) throw DegenerateError("degenerate state statistics at step " + std::to_string(t));
    const double dt_eff = adaptive.gamma / sigma;
    Vector next = euler_step(h, landscape, force, t, dt_eff, base.noise_temperature, radius, rng) + beta;
    detail::guard_divergence(next, t + 1);
    out.sigma.push_back(sigma);
    out.dt_eff.push_back(dt_eff);
    out.trajectory.states.push_back(std::move(next));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Irrotationality check

/// Central-difference Jacobian of a vector field at h.
template <class Field>
Matrix finite_difference_jacobian(Field&& field, const Vector& h, double eps = 1e-5) {
  const Eigen::Index d = h.size();
  Matrix J(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Vector plus = h, minus = h;
    plus[j] += eps;
    minus[j] -= eps;
    J.col(j) = (field(plus) - field(minus)) / (2.0 * eps);
  }
  return J;
}

/// Frobenius norm of the antisymmetric part (J - J^T)/2 of the field's
/// Jacobian; zero for a gradient field.
template <class Field>
double jacobian_symmetry_defect(Field&& field, const Vector& h, double eps = 1e-5) {
  const Matrix J = finite_difference_jacobian(std::forward<Field>(field), h, eps);
  return (0.5 * (J - J.transpose())).norm();
}

/// The drift h -> -grad V(h) + g(h, u_step) as a callable field.
inline std::function<Vector(const Vector&)> drift_field(const EnergyLandscape& landscape, const ContextForce& force,
                                                        std::size_t step = 0) {
  return [&landscape, &force, step](const Vector& h) { return drift(landscape, force, h, step); };
}

}  // namespace dmet
