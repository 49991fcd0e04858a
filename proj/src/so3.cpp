#include "vkp/so3.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace vkp {
namespace {

constexpr double kGimbalBand = 1e-6;

}  // namespace

double wrap_two_pi(double angle) {
  if (angle >= 0.0 && angle < kTwoPi) return angle + 0.0;  // +0.0 turns −0 into 0
  double w = std::fmod(angle, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  // fmod of a value just below a multiple of 2π can land exactly on 2π after
  // the correction above.
  if (w >= kTwoPi) w = 0.0;
  return w + 0.0;
}

double wrap_pi(double angle) {
  if (angle >= -kPi && angle < kPi) return angle;
  double w = wrap_two_pi(angle);
  if (w >= kPi) w -= kTwoPi;
  return w;
}

EulerAngles::EulerAngles(double azimuth, double elevation, double cyclorotation) {
  if (!std::isfinite(azimuth) || !std::isfinite(elevation) || !std::isfinite(cyclorotation)) {
    throw std::invalid_argument("EulerAngles: non-finite angle");
  }
  double e = wrap_pi(elevation);
  if (e > kHalfPi || e < -kHalfPi) {
    e = (e > 0.0 ? kPi : -kPi) - e;
    azimuth += kPi;
    cyclorotation += kPi;
  }
  azimuth_ = wrap_two_pi(azimuth);
  elevation_ = e;
  cyclorotation_ = wrap_pi(cyclorotation);
}

RotationMatrix::RotationMatrix(const Eigen::Matrix3d& m) : m_(m) {
  if (!m.allFinite()) throw std::invalid_argument("RotationMatrix: non-finite entry");
  const double ortho = (m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > kTolerance) {
    throw std::invalid_argument("RotationMatrix: not orthonormal");
  }
  if (std::abs(m.determinant() - 1.0) > kTolerance) {
    throw std::invalid_argument("RotationMatrix: determinant is not +1");
  }
}

RotationMatrix RotationMatrix::about_x(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d m;
  m << 1, 0, 0,
       0, c, -s,
       0, s, c;
  return {m, Unchecked{}};
}

RotationMatrix RotationMatrix::about_y(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d m;
  m << c, 0, s,
       0, 1, 0,
       -s, 0, c;
  return {m, Unchecked{}};
}

RotationMatrix RotationMatrix::about_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d m;
  m << c, -s, 0,
       s, c, 0,
       0, 0, 1;
  return {m, Unchecked{}};
}

RotationMatrix RotationMatrix::transpose() const {
  return {m_.transpose(), Unchecked{}};
}

RotationMatrix RotationMatrix::operator*(const RotationMatrix& rhs) const {
  return {m_ * rhs.m_, Unchecked{}};
}

RotationMatrix euler_to_rotation(const EulerAngles& e) {
  return RotationMatrix::about_z(e.azimuth()) * RotationMatrix::about_y(e.elevation()) *
         RotationMatrix::about_x(e.cyclorotation());
}

EulerAngles rotation_to_euler(const RotationMatrix& r) {
  const double cos_elev = std::hypot(r(0, 0), r(1, 0));
  const double elevation = std::atan2(-r(2, 0), cos_elev);
  if (kHalfPi - std::abs(elevation) < kGimbalBand) {
    // Only azimuth ∓ cyclorotation is observable; put it all in the azimuth.
    const double azimuth = elevation > 0.0 ? std::atan2(r(1, 2), r(1, 1))
                                           : std::atan2(-r(1, 2), r(1, 1));
    return {azimuth, elevation, 0.0};
  }
  return {std::atan2(r(1, 0), r(0, 0)), elevation, std::atan2(r(2, 1), r(2, 2))};
}

double geodesic_distance(const RotationMatrix& r1, const RotationMatrix& r2) {
  const Eigen::Matrix3d rel = r1.matrix().transpose() * r2.matrix();
  const double cos_angle = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  // Skew part gives sin(angle)·axis; atan2 stays accurate near 0 and π where
  // arccos of the trace alone loses half the digits.
  const double sx = rel(2, 1) - rel(1, 2);
  const double sy = rel(0, 2) - rel(2, 0);
  const double sz = rel(1, 0) - rel(0, 1);
  const double sin_angle = 0.5 * std::sqrt(sx * sx + sy * sy + sz * sz);
  return std::atan2(sin_angle, cos_angle);
}

double azimuth_distance(double a1, double a2) {
  const double d = wrap_two_pi(a1 - a2);
  return std::min(d, kTwoPi - d);
}

RotationMatrix pi_flip(const RotationMatrix& r) {
  Eigen::Matrix3d m = r.matrix();
  m.row(0) = -m.row(0);
  m.row(1) = -m.row(1);
  return RotationMatrix(m);
}

double z_reflect_azimuth(double azimuth) { return wrap_two_pi(-azimuth); }

RotationMatrix rotation_from_axis_angle(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  Eigen::Matrix3d k;
  k << 0, -omega.z(), omega.y(),
       omega.z(), 0, -omega.x(),
       -omega.y(), omega.x(), 0;
  double a, b;  // sinθ/θ, (1 − cosθ)/θ²
  if (theta < 1e-6) {
    a = 1.0 - theta * theta / 6.0;
    b = 0.5 - theta * theta / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return {Eigen::Matrix3d::Identity() + a * k + b * k * k, RotationMatrix::Unchecked{}};
}

}  // namespace vkp
