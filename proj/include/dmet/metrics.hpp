#pragma once

// Per-trajectory dynamics: step distances, state continuity C, jump
// detection and successive-token KL divergence.

#include "dmet/core.hpp"
#include "dmet/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace dmet {

struct StepDistances {
  /// delta[t-1] = ||h_t - h_{t-1}||, t = 1..T.
  std::vector<double> delta;
};

struct ContinuityReport {
  double C = 0.0;
  StepDistances delta;
  bool normalized = false;
};

enum class JumpMethod { mean_z, median_mad };

struct JumpReport {
  /// 1-based step indices t with delta[t] > threshold.
  std::vector<std::size_t> indices;
  double threshold = 0.0;
  JumpMethod method = JumpMethod::median_mad;
};

struct KLReport {
  std::vector<double> per_step;
  double mean_kl = 0.0;
};

/// Smoothing mass added to every entry before KL; top-p truncation produces exact zeros.
inline constexpr double kKlEpsilon = 1e-10;
/// Scale factor turning the median absolute deviation into a normal-consistent spread.
inline constexpr double kMadScale = 1.4826;

inline StepDistances step_distances(const Trajectory& traj, bool normalize = true) {
  if (traj.steps() < 1) throw ValidationError("step distances need T >= 1");
  auto prepared = [&](std::size_t t) -> Vector {
    const Vector& h = traj.states[t];
    if (!normalize) return h;
    const double n = h.norm();
    if (n == 0.0) throw DegenerateError("cannot normalize zero state (t=" + std::to_string(t) + ")");
    return h / n;
  };
  StepDistances out;
  out.delta.reserve(traj.steps());
  Vector prev = prepared(0);
  for (std::size_t t = 1; t < traj.states.size(); ++t) {
    Vector cur = prepared(t);
    out.delta.push_back((cur - prev).norm());
    prev = std::move(cur);
  }
  return out;
}

/// C = (1/T) sum_t ||h_t - h_{t-1}||.
inline ContinuityReport continuity(const Trajectory& traj, bool normalize = true) {
  ContinuityReport r;
  r.delta = step_distances(traj, normalize);
  r.normalized = normalize;
  r.C = std::accumulate(r.delta.delta.begin(), r.delta.delta.end(), 0.0) / static_cast<double>(r.delta.delta.size());
  return r;
}

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Flags steps whose distance exceeds a robust or classical threshold.
///   mean_z:     mean + z * std   (population std)
///   median_mad: median + z * 1.4826 * MAD
/// Constant distances give an empty jump set.
inline JumpReport detect_jumps(const StepDistances& d, JumpMethod method = JumpMethod::median_mad, double z = 3.0) {
  const auto& delta = d.delta;
  if (delta.size() < 2) throw ValidationError("jump detection needs T >= 2");
  if (!(z > 0.0)) throw ValidationError("jump threshold z must be > 0");

  JumpReport r;
  r.method = method;
  if (method == JumpMethod::mean_z) {
    const double n = static_cast<double>(delta.size());
    const double mean = std::accumulate(delta.begin(), delta.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : delta) ss += (x - mean) * (x - mean);
    r.threshold = mean + z * std::sqrt(ss / n);
  } else {
    const double med = detail::median(delta);
    std::vector<double> dev;
    dev.reserve(delta.size());
    for (double x : delta) dev.push_back(std::abs(x - med));
    r.threshold = med + z * kMadScale * detail::median(std::move(dev));
  }
  for (std::size_t i = 0; i < delta.size(); ++i)
    if (delta[i] > r.threshold) r.indices.push_back(i + 1);
  return r;
}

/// KL(p || q) after adding kKlEpsilon to every entry and renormalizing.
inline double smoothed_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ValidationError("distribution length mismatch");
  const double np = 1.0 + kKlEpsilon * static_cast<double>(p.size());
  const double nq = 1.0 + kKlEpsilon * static_cast<double>(q.size());
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = (p[i] + kKlEpsilon) / np;
    const double qi = (q[i] + kKlEpsilon) / nq;
    kl += pi * std::log(pi / qi);
  }
  return std::max(kl, 0.0);
}

inline KLReport mean_successive_kl(const Trajectory& traj) {
  if (!traj.token_distributions) throw ValidationError("KL unavailable: trajectory has no token distributions");
  const auto& dists = *traj.token_distributions;
  if (dists.size() < 2) throw ValidationError("KL unavailable: need at least 2 token distributions");
  KLReport r;
  for (std::size_t t = 0; t + 1 < dists.size(); ++t) {
    if (dists[t].size() != dists[t + 1].size())
      throw ValidationError("token_distributions[" + std::to_string(t + 1) + "] length " +
                            std::to_string(dists[t + 1].size()) + " differs from " + std::to_string(dists[t].size()));
    r.per_step.push_back(smoothed_kl(dists[t], dists[t + 1]));
  }
  r.mean_kl = std::accumulate(r.per_step.begin(), r.per_step.end(), 0.0) / static_cast<double>(r.per_step.size());
  return r;
}

}  // namespace dmet
