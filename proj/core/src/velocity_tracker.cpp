#include "evtrack/velocity_tracker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evtrack {

Vector6d VelocityState::mean() const {
  Vector6d m;
  m << v_o, omega;
  return m;
}

void VelocityState::set_mean(const Vector6d& m) {
  v_o = m.head<3>();
  omega = m.tail<3>();
}

void VelocityFilterConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in (0, 1]");
  if (!(R_F > 0.0)) throw std::invalid_argument("R_F must be positive");
  if (!(laplace_b > 0.0)) throw std::invalid_argument("laplace_b must be positive");
  if (!(weight_floor > 0.0)) throw std::invalid_argument("weight_floor must be positive");
  if (!(min_flow >= 0.0)) throw std::invalid_argument("min_flow must be non-negative");
  if (!(max_flow > min_flow)) throw std::invalid_argument("max_flow must exceed min_flow");
}

Eigen::Matrix<double, 2, 6> interaction_matrix(double u, double v, double depth,
                                               const CameraIntrinsics& k) {
  if (!(depth > 0.0)) throw std::invalid_argument("interaction matrix needs positive depth");
  const double du = u - k.cx;
  const double dv = v - k.cy;
  const double inv_d = 1.0 / depth;
  Eigen::Matrix<double, 2, 6> J;
  // Derived from u = cx + fx X/Z, v = cy + fy Y/Z with dP/dt = v_o + omega x P.
  J << k.fx * inv_d, 0.0, -du * inv_d,
       -du * dv / k.fy, (k.fx * k.fx + du * du) / k.fx, -dv * k.fx / k.fy,
       0.0, k.fy * inv_d, -dv * inv_d,
       -(k.fy * k.fy + dv * dv) / k.fy, du * dv / k.fx, du * k.fy / k.fx;
  return J;
}

VelocityState predict(const VelocityState& state, const VelocityFilterConfig& config) {
  VelocityState out = state;
  out.v_o = config.alpha * state.v_o;
  out.omega = config.alpha * state.omega;
  out.P = config.alpha * config.alpha * state.P;
  out.P.topLeftCorner<3, 3>() += config.Q_v;
  out.P.bottomRightCorner<3, 3>() += config.Q_w;
  return out;
}

Vector2d normal_flow_residual(const Vector2d& measured, const Vector2d& predicted) {
  const double n = measured.norm();
  if (!(n > 0.0)) throw std::invalid_argument("normal flow residual needs a non-zero flow");
  const Vector2d dir = measured / n;
  return dir.dot(predicted) * dir - measured;
}

std::vector<double> laplace_weights(std::span<const double> residual_norms, double b,
                                    double floor) {
  if (residual_norms.empty()) return {};
  if (!(b > 0.0)) throw std::invalid_argument("laplace scale must be positive");
  std::vector<double> sorted(residual_norms.begin(), residual_norms.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median =
      n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  std::vector<double> w;
  w.reserve(n);
  for (double r : residual_norms) {
    w.push_back(std::max(std::exp(-std::abs(r - median) / b) / (2.0 * b), floor));
  }
  return w;
}

std::vector<double> laplace_weights(std::span<const Vector2d> residuals, double b, double floor) {
  std::vector<double> norms;
  norms.reserve(residuals.size());
  for (const auto& r : residuals) norms.push_back(r.norm());
  return laplace_weights(norms, b, floor);
}

FlowCorrectionRows build_flow_rows(const VelocityState& state, const FlowObservationBatch& batch,
                                   const CameraIntrinsics& intrinsics,
                                   const VelocityFilterConfig& config) {
  if (!(batch.delta_T > 0.0)) throw std::invalid_argument("delta_T must be positive");
  const double dt = batch.delta_T;
  const double scale = config.displacement_mode ? dt : 1.0;
  const double base_noise = config.R_F;
  const Vector6d x = state.mean();

  struct Row {
    Eigen::Matrix<double, 1, 6> h;
    double z;
    int owner;
  };
  std::vector<Row> rows;
  std::vector<double> residuals;

  for (const auto& obs : batch.observations) {
    const auto& m = obs.measurement;
    if (!is_valid_depth(obs.depth)) continue;
    if (!m.flow.allFinite()) continue;
    const double mag = m.flow.norm();
    if (config.normal_flow && !(mag > config.min_flow)) continue;
    if (mag > config.max_flow) continue;

    const auto J = interaction_matrix(m.u, m.v, obs.depth, intrinsics);
    const Vector2d predicted = J * x;
    const int owner = static_cast<int>(residuals.size());
    if (config.normal_flow) {
      // The residual lies along the measured direction; use its signed length.
      const Vector2d n = m.flow / mag;
      rows.push_back({n.transpose() * J * scale, mag * scale, owner});
      residuals.push_back(normal_flow_residual(m.flow, predicted).norm() * scale);
    } else {
      rows.push_back({J.row(0) * scale, m.flow.x() * scale, owner});
      rows.push_back({J.row(1) * scale, m.flow.y() * scale, owner});
      residuals.push_back((predicted - m.flow).norm() * scale);
    }
  }

  FlowCorrectionRows out;
  out.residual_norms = residuals;
  if (config.weighting) {
    out.weights = laplace_weights(std::span<const double>(residuals), config.laplace_b,
                                  config.weight_floor);
  } else {
    out.weights.assign(residuals.size(), 1.0);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.H.resize(n, 6);
  out.z.resize(n);
  out.noise.resize(n);
  out.row_owner.resize(rows.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    out.H.row(r) = row.h;
    out.z(r) = row.z;
    out.noise(r) = base_noise / out.weights[static_cast<std::size_t>(row.owner)];
    out.row_owner[static_cast<std::size_t>(r)] = row.owner;
  }
  return out;
}

VelocityState correct(const VelocityState& state, const FlowObservationBatch& batch,
                      const CameraIntrinsics& intrinsics, const VelocityFilterConfig& config) {
  const FlowCorrectionRows rows = build_flow_rows(state, batch, intrinsics, config);
  if (rows.z.size() == 0) return state;

  // Sequential scalar updates with a diagonal noise model are equivalent to
  // the stacked update; Joseph form keeps P symmetric positive semidefinite.
  Vector6d x = state.mean();
  Matrix6d P = state.P;
  for (Eigen::Index r = 0; r < rows.z.size(); ++r) {
    const Eigen::Matrix<double, 1, 6> h = rows.H.row(r);
    const double s = (h * P * h.transpose())(0, 0) + rows.noise(r);
    const Vector6d k = P * h.transpose() / s;
    x += k * (rows.z(r) - (h * x)(0, 0));
    const Matrix6d a = Matrix6d::Identity() - k * h;
    P = a * P * a.transpose() + k * rows.noise(r) * k.transpose();
  }
  VelocityState out;
  out.set_mean(x);
  out.P = 0.5 * (P + P.transpose());
  return out;
}

VelocityTracker::VelocityTracker(const CameraIntrinsics& intrinsics,
                                 const VelocityFilterConfig& config,
                                 const VelocityState& initial)
    : intrinsics_(intrinsics), config_(config), state_(initial) {
  config_.validate();
}

const VelocityState& VelocityTracker::step(const FlowObservationBatch& batch) {
  state_ = correct(predict(state_, config_), batch, intrinsics_, config_);
  return state_;
}

}  // namespace evtrack
