#pragma once

#include "dmet/dmet.hpp"

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

namespace testing_support {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dmet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline dmet::Matrix gaussian_cloud(int n, int d, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  dmet::Matrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = normal(rng);
  return x;
}

inline dmet::Trajectory line_trajectory(int T, int d = 2) {
  dmet::Trajectory traj;
  for (int t = 0; t <= T; ++t) {
    dmet::Vector h = dmet::Vector::Zero(d);
    h[0] = t;
    traj.states.push_back(h);
  }
  traj.meta.sample_id = "line";
  return traj;
}

inline dmet::Trajectory random_trajectory(int T, int d, std::uint64_t seed, const std::string& id = "r") {
  const dmet::Matrix x = gaussian_cloud(T + 1, d, seed);
  dmet::Trajectory traj;
  for (int t = 0; t <= T; ++t) traj.states.push_back(x.row(t).transpose());
  traj.meta.sample_id = id;
  return traj;
}

}  // namespace testing_support
