#pragma once

#include <span>
#include <vector>

#include "evtrack/core_types.hpp"
#include "evtrack/event_flow.hpp"

namespace evtrack {

/// Object 6-DoF velocity in the camera frame.
///
/// `v_o` is the velocity of the object point that currently coincides with the
/// camera origin; `omega` is the angular velocity. A camera-frame object point
/// P therefore moves with dP/dt = v_o + omega x P. The mean is ordered
/// (v_o, omega).
struct VelocityState {
  Vector3d v_o = Vector3d::Zero();
  Vector3d omega = Vector3d::Zero();
  Matrix6d P = Matrix6d::Identity() * 10.0;

  Vector6d mean() const;
  void set_mean(const Vector6d& m);
};

struct VelocityFilterConfig {
  double alpha = 0.5;
  Matrix3d Q_v = Matrix3d::Identity() * 0.1 * 0.1;
  Matrix3d Q_w = Matrix3d::Identity() * 0.5 * 0.5;
  /// Flow noise variance and Laplacian weighting scale. Both are in the units
  /// of the stacked rows: (px/s)^2 and px/s by default, px^2 and px in
  /// displacement mode.
  double R_F = 2.0 * 2.0;
  double laplace_b = 1.0;
  double weight_floor = 1e-6;
  /// Measured flows below this magnitude (px/s) are dropped in normal-flow mode.
  double min_flow = 1.0;
  /// Measured flows above this magnitude (px/s) are dropped. Triplets along a
  /// nearly pixel-aligned edge can report flows of 1e5 px/s and more.
  double max_flow = 1e4;

  bool normal_flow = true;
  bool weighting = true;
  /// Compare displacements (flow * delta_T) instead of rates.
  bool displacement_mode = false;

  void validate() const;
};

struct FlowObservation {
  FlowMeasurement measurement;
  double depth = 0.0;
};

struct FlowObservationBatch {
  std::vector<FlowObservation> observations;
  double delta_T = 0.01;
};

/// Image Jacobian mapping (v_o, omega) to the pixel velocity (px/s) of the
/// point seen at (u, v) with depth d. Requires d > 0.
Eigen::Matrix<double, 2, 6> interaction_matrix(double u, double v, double depth,
                                               const CameraIntrinsics& intrinsics);

/// Decaying-velocity prediction: mean <- alpha * mean, P <- alpha^2 P + Q.
VelocityState predict(const VelocityState& state, const VelocityFilterConfig& config);

/// Normal-flow residual: projection of `predicted` onto the direction of
/// `measured`, minus `measured`. Requires a non-zero measured flow.
Vector2d normal_flow_residual(const Vector2d& measured, const Vector2d& predicted);

/// Laplacian weights around the median residual norm, floored at `floor`.
std::vector<double> laplace_weights(std::span<const double> residual_norms, double b,
                                    double floor = 1e-6);
std::vector<double> laplace_weights(std::span<const Vector2d> residuals, double b,
                                    double floor = 1e-6);

/// Per-row data of a correction, exposed for diagnostics and tests.
struct FlowCorrectionRows {
  Eigen::MatrixXd H;          // rows x 6, in the units of `z`
  Eigen::VectorXd z;          // stacked measurements
  Eigen::VectorXd noise;      // per-row variance after weighting
  std::vector<double> residual_norms;  // row units, one per observation
  std::vector<double> weights;         // one per observation
  std::vector<int> row_owner;          // observation index for each row
};

/// Builds the stacked linear measurement model for `batch` around `state`.
/// Observations with invalid depth or (in normal-flow mode) sub-floor flow are
/// skipped.
FlowCorrectionRows build_flow_rows(const VelocityState& state, const FlowObservationBatch& batch,
                                   const CameraIntrinsics& intrinsics,
                                   const VelocityFilterConfig& config);

/// Kalman correction with a batch of flow observations. When every observation
/// is filtered out the state is returned unchanged.
VelocityState correct(const VelocityState& state, const FlowObservationBatch& batch,
                      const CameraIntrinsics& intrinsics, const VelocityFilterConfig& config);

/// Predict-then-correct driver over consecutive flow batches.
class VelocityTracker {
 public:
  VelocityTracker(const CameraIntrinsics& intrinsics, const VelocityFilterConfig& config,
                  const VelocityState& initial = {});

  const VelocityState& state() const { return state_; }
  const VelocityState& step(const FlowObservationBatch& batch);

 private:
  CameraIntrinsics intrinsics_;
  VelocityFilterConfig config_;
  VelocityState state_;
};

}  // namespace evtrack
