#pragma once

#include <span>
#include <vector>

#include "evtrack/core_types.hpp"
#include "evtrack/velocity_tracker.hpp"

namespace evtrack {

/// Object pose in the camera frame with a 6x6 error covariance over
/// (translation, rotation error). The rotation error is a local rotation
/// vector: the true orientation is q * exp(delta_theta).
struct PoseState {
  Vector3d t = Vector3d::Zero();
  UnitQuaternion q;
  Matrix6d P = Matrix6d::Identity() * 1e-4;
};

struct PoseObservation {
  double stamp = 0.0;
  Vector3d t = Vector3d::Zero();
  UnitQuaternion q;
};

/// Noise and sigma-point parameters of the pose filter.
///
/// Process noise is a density: Q_t [m^2/s] and Q_q [rad^2/s] are multiplied by
/// the propagation interval. The defaults equal (1 cm)^2 and (0.5 deg)^2 per
/// 10 ms step.
struct UkfConfig {
  Matrix3d Q_t = Matrix3d::Identity() * (0.01 * 0.01 / 0.01);
  Matrix3d Q_q = Matrix3d::Identity() * (0.5 * 0.5 * (3.14159265358979323846 / 180.0) *
                                          (3.14159265358979323846 / 180.0) / 0.01);
  Matrix3d R_t = Matrix3d::Identity() * (0.02 * 0.02);
  Matrix3d R_q = Matrix3d::Identity() * (5.0 * 5.0 * (3.14159265358979323846 / 180.0) *
                                          (3.14159265358979323846 / 180.0));
  /// Sigma-point spread (alpha), secondary scale (beta) and prior-knowledge
  /// weight (kappa).
  double spread = 1e-3;
  double secondary = 2.0;
  double prior_weight = 0.0;
  /// Adds the velocity filter covariance, mapped over dt, to the process noise.
  bool fold_velocity_covariance = false;

  void validate() const;
};

/// Unscented transform weights for the 6-dim error state.
struct SigmaWeights {
  double lambda;
  double mean0;
  double cov0;
  double others;
};
SigmaWeights sigma_weights(const UkfConfig& config);

/// One propagation over dt with velocity as a known input:
///   t+ = (I + [omega]x dt) t + v_o dt,   q+ = exp(omega dt) * q.
PoseState propagate(const PoseState& state, const VelocityState& velocity, double dt,
                    const UkfConfig& config);

/// Correction with a direct pose observation. The observation quaternion may
/// carry either sign.
PoseState correct(const PoseState& state, const PoseObservation& obs, const UkfConfig& config);

struct VelocitySample {
  double t = 0.0;
  VelocityState velocity;
};

struct PoseSample {
  double t = 0.0;
  Vector3d position = Vector3d::Zero();
  UnitQuaternion q;

  friend bool operator==(const PoseSample& a, const PoseSample& b) {
    return a.t == b.t && a.position == b.position && a.q.eigen().coeffs() == b.q.eigen().coeffs();
  }
};

/// Propagates through every velocity sample (starting from `initial` at time
/// `t0`) and corrects with each observation once the propagation reaches its
/// stamp. Observations at or before t0 are ignored. Emits one pose per
/// velocity sample. An empty observation list yields pure integration.
std::vector<PoseSample> run_fusion(std::span<const VelocitySample> velocity,
                                   std::span<const PoseObservation> observations,
                                   const PoseState& initial, double t0, const UkfConfig& config);

}  // namespace evtrack
