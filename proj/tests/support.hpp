#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "evtrack/core_types.hpp"

namespace evtrack::testing {

// Hand-rolled generators for the property tests.
struct Gen {
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  double normal(double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(rng); }

  Vector3d vec3(double lo, double hi) { return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}; }
  Vector3d gaussian3(double sigma) { return {normal(sigma), normal(sigma), normal(sigma)}; }

  Vector6d twist(double v_max, double w_max) {
    Vector6d x;
    x << vec3(-v_max, v_max), vec3(-w_max, w_max);
    return x;
  }

  // Uniform on SO(3) (Shoemake).
  UnitQuaternion rotation() {
    const double u1 = uniform(0.0, 1.0), u2 = uniform(0.0, 2.0 * kPi), u3 = uniform(0.0, 2.0 * kPi);
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    return {a * std::sin(u2), a * std::cos(u2), b * std::sin(u3), b * std::cos(u3)};
  }

  // Symmetric positive definite with eigenvalues in [lo, hi].
  Matrix6d spd(double lo, double hi) {
    Eigen::Matrix<double, 6, 6> a;
    for (int i = 0; i < 36; ++i) a(i) = normal();
    const Eigen::HouseholderQR<Matrix6d> qr(a);
    const Matrix6d q = qr.householderQ();
    Vector6d d;
    for (int i = 0; i < 6; ++i) d(i) = uniform(lo, hi);
    return q * d.asDiagonal() * q.transpose();
  }

  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 rng;
};

inline double min_eigenvalue(const Matrix6d& p) {
  return Eigen::SelfAdjointEigenSolver<Matrix6d>(0.5 * (p + p.transpose())).eigenvalues().minCoeff();
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("evtrack_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace evtrack::testing
