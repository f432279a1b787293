#include "evtrack/pose_tracker.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace evtrack {

namespace {

constexpr int kDim = 6;
constexpr int kSigma = 2 * kDim + 1;

bool positive_definite(const Matrix3d& m) {
  Eigen::LLT<Matrix3d> llt(0.5 * (m + m.transpose()));
  return llt.info() == Eigen::Success;
}

Matrix6d matrix_sqrt(const Matrix6d& a) {
  Eigen::LLT<Matrix6d> llt(a);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(0.5 * (a + a.transpose()));
  const Vector6d ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

struct Sigma {
  Vector3d t;
  UnitQuaternion q;
};

std::array<Sigma, kSigma> draw_sigma(const PoseState& s, const SigmaWeights& w) {
  const Matrix6d L = matrix_sqrt((kDim + w.lambda) * s.P);
  std::array<Sigma, kSigma> out;
  out[0] = {s.t, s.q};
  for (int i = 0; i < kDim; ++i) {
    const Vector6d d = L.col(i);
    out[1 + i] = {s.t + d.head<3>(), s.q * UnitQuaternion::from_rotation_vector(d.tail<3>())};
    out[1 + kDim + i] = {s.t - d.head<3>(),
                         s.q * UnitQuaternion::from_rotation_vector(-d.tail<3>())};
  }
  return out;
}

double weight_cov(const SigmaWeights& w, int i) { return i == 0 ? w.cov0 : w.others; }

// Weighted mean on the rotation manifold, iterated in the tangent space of the
// running estimate. Deviations are taken about the central point so the large
// central weight does not cancel.
UnitQuaternion quaternion_mean(const std::array<Sigma, kSigma>& pts, const SigmaWeights& w) {
  UnitQuaternion ref = pts[0].q;
  for (int iter = 0; iter < 8; ++iter) {
    const UnitQuaternion inv = ref.inverse();
    const Vector3d e0 = (inv * pts[0].q).to_rotation_vector();
    Vector3d delta = e0;
    for (int i = 1; i < kSigma; ++i) {
      delta += w.others * ((inv * pts[i].q).to_rotation_vector() - e0);
    }
    ref = ref * UnitQuaternion::from_rotation_vector(delta);
    if (delta.norm() < 1e-14) break;
  }
  return ref;
}

Vector3d translation_mean(const std::array<Sigma, kSigma>& pts, const SigmaWeights& w) {
  Vector3d acc = Vector3d::Zero();
  for (int i = 1; i < kSigma; ++i) acc += w.others * (pts[i].t - pts[0].t);
  return pts[0].t + acc;
}

Matrix6d symmetrized(const Matrix6d& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

void UkfConfig::validate() const {
  for (const Matrix3d* m : {&Q_t, &Q_q, &R_t, &R_q}) {
    if (!positive_definite(*m)) {
      throw std::invalid_argument("UKF noise matrices must be positive definite");
    }
  }
  if (!(spread > 0.0)) throw std::invalid_argument("sigma-point spread must be positive");
  if (!(kDim + sigma_weights(*this).lambda > 0.0)) {
    throw std::invalid_argument("sigma-point parameters give a non-positive scale");
  }
}

SigmaWeights sigma_weights(const UkfConfig& c) {
  SigmaWeights w;
  w.lambda = c.spread * c.spread * (kDim + c.prior_weight) - kDim;
  const double scale = kDim + w.lambda;
  w.mean0 = w.lambda / scale;
  w.cov0 = w.mean0 + (1.0 - c.spread * c.spread + c.secondary);
  w.others = 1.0 / (2.0 * scale);
  return w;
}

PoseState propagate(const PoseState& state, const VelocityState& velocity, double dt,
                    const UkfConfig& config) {
  if (!(dt > 0.0)) throw std::invalid_argument("propagation interval must be positive");
  const SigmaWeights w = sigma_weights(config);
  auto pts = draw_sigma(state, w);

  const Matrix3d transition = Matrix3d::Identity() + skew(velocity.omega) * dt;
  const Vector3d shift = velocity.v_o * dt;
  const UnitQuaternion rot = UnitQuaternion::from_rotation_vector(velocity.omega * dt);
  for (auto& p : pts) {
    p.t = transition * p.t + shift;
    p.q = rot * p.q;
  }

  PoseState out;
  out.t = translation_mean(pts, w);
  out.q = quaternion_mean(pts, w);

  const UnitQuaternion inv = out.q.inverse();
  Matrix6d P = Matrix6d::Zero();
  for (int i = 0; i < kSigma; ++i) {
    Vector6d d;
    d << pts[i].t - out.t, (inv * pts[i].q).to_rotation_vector();
    P += weight_cov(w, i) * d * d.transpose();
  }
  P.topLeftCorner<3, 3>() += config.Q_t * dt;
  P.bottomRightCorner<3, 3>() += config.Q_q * dt;
  if (config.fold_velocity_covariance) {
    const Matrix3d R = out.q.to_rotation_matrix();
    P.topLeftCorner<3, 3>() += dt * dt * velocity.P.topLeftCorner<3, 3>();
    P.bottomRightCorner<3, 3>() +=
        dt * dt * R.transpose() * velocity.P.bottomRightCorner<3, 3>() * R;
  }
  out.P = symmetrized(P);
  return out;
}

PoseState correct(const PoseState& state, const PoseObservation& obs, const UkfConfig& config) {
  const SigmaWeights w = sigma_weights(config);
  const auto pts = draw_sigma(state, w);
  const UnitQuaternion q_meas = state.q.dot(obs.q) < 0.0 ? obs.q.negated() : obs.q;
  const UnitQuaternion inv = state.q.inverse();

  // Predicted measurements live in the tangent space at the predicted pose.
  std::array<Vector6d, kSigma> y;
  for (int i = 0; i < kSigma; ++i) {
    y[static_cast<std::size_t>(i)] << pts[i].t, (inv * pts[i].q).to_rotation_vector();
  }
  Vector6d y_mean = y[0];
  for (int i = 1; i < kSigma; ++i) y_mean += w.others * (y[static_cast<std::size_t>(i)] - y[0]);

  Matrix6d Pyy = Matrix6d::Zero();
  Matrix6d Pxy = Matrix6d::Zero();
  for (int i = 0; i < kSigma; ++i) {
    const Vector6d dy = y[static_cast<std::size_t>(i)] - y_mean;
    Vector6d dx;
    dx << pts[i].t - state.t, (inv * pts[i].q).to_rotation_vector();
    Pyy += weight_cov(w, i) * dy * dy.transpose();
    Pxy += weight_cov(w, i) * dx * dy.transpose();
  }
  Pyy.topLeftCorner<3, 3>() += config.R_t;
  Pyy.bottomRightCorner<3, 3>() += config.R_q;
  Pyy = symmetrized(Pyy);

  Vector6d z;
  z << obs.t, (inv * q_meas).to_rotation_vector();

  const Eigen::LDLT<Matrix6d> solver(Pyy);
  const Matrix6d K = solver.solve(Pxy.transpose()).transpose();
  const Vector6d dx = K * (z - y_mean);

  PoseState out;
  out.t = state.t + dx.head<3>();
  out.q = state.q * UnitQuaternion::from_rotation_vector(dx.tail<3>());
  out.P = symmetrized(state.P - K * Pyy * K.transpose());
  return out;
}

std::vector<PoseSample> run_fusion(std::span<const VelocitySample> velocity,
                                   std::span<const PoseObservation> observations,
                                   const PoseState& initial, double t0, const UkfConfig& config) {
  if (velocity.empty()) throw std::invalid_argument("fusion needs a non-empty velocity trace");
  config.validate();

  constexpr double kStampSlack = 1e-9;
  std::size_t next_obs = 0;
  for (std::size_t n = 1; n < observations.size(); ++n) {
    if (observations[n].stamp < observations[n - 1].stamp) {
      throw DataError("pose observations out of order at index " + std::to_string(n));
    }
  }
  while (next_obs < observations.size() && observations[next_obs].stamp <= t0 + kStampSlack) {
    ++next_obs;
  }

  std::vector<PoseSample> trace;
  trace.reserve(velocity.size());
  PoseState state = initial;
  double t_prev = t0;
  for (std::size_t k = 0; k < velocity.size(); ++k) {
    const double t = velocity[k].t;
    if (t < t_prev) throw DataError("velocity trace out of order at index " + std::to_string(k));
    if (t > t_prev) state = propagate(state, velocity[k].velocity, t - t_prev, config);
    while (next_obs < observations.size() && observations[next_obs].stamp <= t + kStampSlack) {
      state = correct(state, observations[next_obs], config);
      ++next_obs;
    }
    trace.push_back({t, state.t, state.q});
    t_prev = t;
  }
  return trace;
}

}  // namespace evtrack
