#include "evtrack/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace evtrack {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("camera focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("camera resolution must be positive");
  }
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw std::invalid_argument("principal point must lie inside the sensor");
  }
}

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) : q_(w, x, y, z) {
  const double n = q_.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::invalid_argument("quaternion must have finite non-zero norm");
  }
  q_.coeffs() /= n;
}

UnitQuaternion::UnitQuaternion(const Eigen::Quaterniond& q)
    : UnitQuaternion(q.w(), q.x(), q.y(), q.z()) {}

UnitQuaternion UnitQuaternion::from_rotation_vector(const Vector3d& phi) {
  const double angle = phi.norm();
  const double half = 0.5 * angle;
  // sin(half)/angle, with a series expansion near zero.
  double k;
  if (angle < 1e-8) {
    k = 0.5 - angle * angle / 48.0;
  } else {
    k = std::sin(half) / angle;
  }
  return {std::cos(half), k * phi.x(), k * phi.y(), k * phi.z()};
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vector3d& axis, double angle_rad) {
  return from_rotation_vector(axis.normalized() * angle_rad);
}

UnitQuaternion UnitQuaternion::conjugate() const { return {q_.w(), -q_.x(), -q_.y(), -q_.z()}; }

UnitQuaternion UnitQuaternion::negated() const { return {-q_.w(), -q_.x(), -q_.y(), -q_.z()}; }

Vector3d UnitQuaternion::to_rotation_vector() const {
  double w = q_.w();
  Vector3d v = q_.vec();
  if (w < 0.0) {
    w = -w;
    v = -v;
  }
  const double s = v.norm();
  if (s < 1e-12) {
    // angle ~ 2 s / w; first-order.
    return 2.0 * v / w;
  }
  const double angle = 2.0 * std::atan2(s, w);
  return v * (angle / s);
}

UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  return UnitQuaternion(a.q_ * b.q_);
}

UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b) { return a * b; }

Matrix3d skew(const Vector3d& w) {
  Matrix3d s;
  s << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return s;
}

double rotation_vector_error(const UnitQuaternion& q_est, const UnitQuaternion& q_gt) {
  const double angle = (q_gt.inverse() * q_est).to_rotation_vector().norm();
  return std::min(angle, std::numbers::pi) * 180.0 / std::numbers::pi;
}

DepthMap::DepthMap(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("depth map dimensions must be positive");
  }
  values_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0.0);
}

bool DepthMap::valid(int u, int v) const {
  if (u < 0 || v < 0 || u >= width_ || v >= height_) return false;
  return is_valid_depth(values_[index(u, v)]);
}

void DepthMap::set(int u, int v, double depth) {
  if (u < 0 || v < 0 || u >= width_ || v >= height_) return;
  values_[index(u, v)] = depth;
}

void DepthMap::invalidate(int u, int v) { set(u, v, 0.0); }

void DepthMap::clear() { std::fill(values_.begin(), values_.end(), 0.0); }

double DepthMap::lookup(int u, int v, int search_radius) const {
  if (valid(u, v)) return at(u, v);
  double best = 0.0;
  int best_d2 = std::numeric_limits<int>::max();
  const int u0 = std::max(0, u - search_radius);
  const int u1 = std::min(width_ - 1, u + search_radius);
  const int v0 = std::max(0, v - search_radius);
  const int v1 = std::min(height_ - 1, v + search_radius);
  for (int y = v0; y <= v1; ++y) {
    for (int x = u0; x <= u1; ++x) {
      const double d = values_[index(x, y)];
      if (!is_valid_depth(d)) continue;
      const int d2 = (x - u) * (x - u) + (y - v) * (y - v);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = d;
      }
    }
  }
  return best;
}

std::size_t DepthMap::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [](double d) { return is_valid_depth(d); }));
}

DepthSequence::DepthSequence(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("depth sequence size must be positive");
}

void DepthSequence::add_frame(double stamp, std::vector<DepthSample> samples) {
  if (!std::isfinite(stamp)) throw DataError("depth stamp must be finite");
  if (!stamps_.empty() && stamp < stamps_.back()) {
    throw DataError("depth stamps out of order at frame " + std::to_string(stamps_.size()));
  }
  for (const auto& s : samples) {
    if (s.u < 0 || s.v < 0 || s.u >= width_ || s.v >= height_) {
      throw DataError("depth sample outside the sensor at frame " + std::to_string(stamps_.size()));
    }
    if (!is_valid_depth(s.depth)) {
      throw DataError("invalid depth value at frame " + std::to_string(stamps_.size()));
    }
  }
  stamps_.push_back(stamp);
  frames_.push_back(std::move(samples));
}

void DepthSequence::add_frame(double stamp, const DepthMap& map) {
  if (map.width() != width_ || map.height() != height_) {
    throw std::invalid_argument("depth map size does not match the sequence");
  }
  std::vector<DepthSample> samples;
  for (int v = 0; v < height_; ++v) {
    for (int u = 0; u < width_; ++u) {
      if (map.valid(u, v)) samples.push_back({u, v, map.at(u, v)});
    }
  }
  add_frame(stamp, std::move(samples));
}

std::size_t DepthSequence::index_at(double t) const {
  if (stamps_.empty()) throw std::out_of_range("depth sequence is empty");
  const auto it = std::upper_bound(stamps_.begin(), stamps_.end(), t);
  if (it == stamps_.begin()) return 0;
  return static_cast<std::size_t>(it - stamps_.begin()) - 1;
}

const DepthMap& DepthSequence::frame_at(double t) const {
  const std::size_t i = index_at(t);
  if (i != cached_) {
    if (cache_.width() != width_ || cache_.height() != height_) {
      cache_ = DepthMap(width_, height_);
    } else if (cached_ < frames_.size()) {
      for (const auto& s : frames_[cached_]) cache_.invalidate(s.u, s.v);
    }
    for (const auto& s : frames_[i]) cache_.set(s.u, s.v, s.depth);
    cached_ = i;
  }
  return cache_;
}

double DepthSequence::lookup(double t, int u, int v, int search_radius) const {
  return frame_at(t).lookup(u, v, search_radius);
}

}  // namespace evtrack
