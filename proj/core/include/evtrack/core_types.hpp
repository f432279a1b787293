#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace evtrack {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Raised when an input stream or file violates its format or ordering contract.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A single brightness-change sample. Timestamps are seconds from stream start.
struct Event {
  double t = 0.0;
  std::int32_t u = 0;
  std::int32_t v = 0;
  std::int8_t polarity = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Ideal pinhole camera.
struct CameraIntrinsics {
  double fx = 480.0;
  double fy = 480.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;

  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }

  /// Projects a camera-frame point. Caller guarantees Z > 0.
  Vector2d project(const Vector3d& p) const {
    return {cx + fx * p.x() / p.z(), cy + fy * p.y() / p.z()};
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Unit quaternion, Hamilton convention, scalar first.
///
/// A quaternion q describing an object's orientation rotates object-frame
/// vectors into the camera frame: p_cam = q * p_obj. Composition a * b applies
/// b first, then a. Every constructor and operation renormalizes so that the
/// norm stays within 1e-9 of one.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  UnitQuaternion(double w, double x, double y, double z);
  explicit UnitQuaternion(const Eigen::Quaterniond& q);

  static UnitQuaternion identity() { return {}; }
  /// Exponential map of a rotation vector (axis * angle, radians).
  static UnitQuaternion from_rotation_vector(const Vector3d& phi);
  static UnitQuaternion from_axis_angle(const Vector3d& axis, double angle_rad);

  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }
  double norm() const { return q_.norm(); }
  const Eigen::Quaterniond& eigen() const { return q_; }

  UnitQuaternion conjugate() const;
  UnitQuaternion inverse() const { return conjugate(); }
  UnitQuaternion negated() const;
  double dot(const UnitQuaternion& other) const { return q_.dot(other.q_); }

  /// Logarithm map: rotation vector with angle in [0, pi], sign-ambiguity resolved.
  Vector3d to_rotation_vector() const;
  Matrix3d to_rotation_matrix() const { return q_.toRotationMatrix(); }
  Vector3d rotate(const Vector3d& v) const { return q_ * v; }

  friend UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b);

 private:
  Eigen::Quaterniond q_{1.0, 0.0, 0.0, 0.0};
};

/// Hamilton product a ⊗ b, renormalized.
UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b);

/// Skew-symmetric matrix S with S * x == w.cross(x).
Matrix3d skew(const Vector3d& w);

/// Angle of q_gt^-1 ⊗ q_est in degrees, in [0, 180].
double rotation_vector_error(const UnitQuaternion& q_est, const UnitQuaternion& q_gt);

/// Dense per-pixel depth in meters. Non-finite or non-positive values mark holes.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  bool valid(int u, int v) const;
  /// Raw value; only meaningful when valid(u, v).
  double at(int u, int v) const { return values_[index(u, v)]; }
  void set(int u, int v, double depth);
  void invalidate(int u, int v);
  void clear();

  /// Depth at (u, v) or at the nearest valid pixel within a square search radius.
  /// Returns a non-positive value when nothing valid is found.
  double lookup(int u, int v, int search_radius) const;

  std::size_t valid_count() const;

 private:
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(u);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

inline bool is_valid_depth(double d) { return std::isfinite(d) && d > 0.0; }

struct DepthSample {
  int u = 0;
  int v = 0;
  double depth = 0.0;
};

/// Time-stamped sparse depth snapshots. Lookups expand one snapshot at a time
/// into a dense map that is cached, so the class is not safe for concurrent use.
class DepthSequence {
 public:
  DepthSequence() = default;
  DepthSequence(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  /// Stamps must be non-decreasing; samples must lie inside the sensor and
  /// carry valid depth. Throws DataError otherwise.
  void add_frame(double stamp, std::vector<DepthSample> samples);
  void add_frame(double stamp, const DepthMap& map);

  std::size_t size() const { return stamps_.size(); }
  bool empty() const { return stamps_.empty(); }
  double stamp(std::size_t i) const { return stamps_.at(i); }
  const std::vector<DepthSample>& samples(std::size_t i) const { return frames_.at(i); }

  /// Index of the latest snapshot at or before t, or 0 when t precedes all.
  /// Throws std::out_of_range when empty.
  std::size_t index_at(double t) const;
  const DepthMap& frame_at(double t) const;
  double lookup(double t, int u, int v, int search_radius) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> stamps_;
  std::vector<std::vector<DepthSample>> frames_;
  mutable std::size_t cached_ = static_cast<std::size_t>(-1);
  mutable DepthMap cache_;
};

}  // namespace evtrack
