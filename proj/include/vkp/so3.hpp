#pragma once

#include <numbers>

#include <Eigen/Core>

namespace vkp {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kHalfPi = 0.5 * std::numbers::pi;

/// Wraps an angle into [0, 2π). Values already in range are returned unchanged.
double wrap_two_pi(double angle);

/// Wraps an angle into [−π, π). Values already in range are returned unchanged.
double wrap_pi(double angle);

/**
 * Viewpoint as (azimuth, elevation, cyclorotation), radians.
 *
 * Canonical ranges: azimuth in [0, 2π), elevation in [−π/2, π/2],
 * cyclorotation in [−π, π). The constructor normalizes any finite triple into
 * these ranges. An elevation beyond ±π/2 is folded with the identity
 * (φ, ε, ψ) ≡ (φ + π, π − ε, ψ + π), so the represented rotation is preserved.
 */
class EulerAngles {
 public:
  EulerAngles() = default;
  EulerAngles(double azimuth, double elevation, double cyclorotation);

  double azimuth() const { return azimuth_; }
  double elevation() const { return elevation_; }
  double cyclorotation() const { return cyclorotation_; }

  friend bool operator==(const EulerAngles&, const EulerAngles&) = default;

 private:
  double azimuth_ = 0.0;
  double elevation_ = 0.0;
  double cyclorotation_ = 0.0;
};

/// 3×3 rotation matrix. Orthonormality (1e-9) and det = 1 (1e-9) are enforced
/// on construction from an arbitrary matrix.
class RotationMatrix {
 public:
  static constexpr double kTolerance = 1e-9;

  RotationMatrix() : m_(Eigen::Matrix3d::Identity()) {}

  /// Throws std::invalid_argument if `m` is not a proper rotation.
  explicit RotationMatrix(const Eigen::Matrix3d& m);

  static RotationMatrix about_x(double angle);
  static RotationMatrix about_y(double angle);
  static RotationMatrix about_z(double angle);

  const Eigen::Matrix3d& matrix() const { return m_; }
  double operator()(int row, int col) const { return m_(row, col); }

  RotationMatrix transpose() const;
  RotationMatrix operator*(const RotationMatrix& rhs) const;

  friend bool operator==(const RotationMatrix& a, const RotationMatrix& b) {
    return a.m_ == b.m_;
  }

 private:
  struct Unchecked {};
  RotationMatrix(const Eigen::Matrix3d& m, Unchecked) : m_(m) {}

  friend RotationMatrix rotation_from_axis_angle(const Eigen::Vector3d&);

  Eigen::Matrix3d m_;
};

/// R = Rz(azimuth) · Ry(elevation) · Rx(cyclorotation).
RotationMatrix euler_to_rotation(const EulerAngles& e);

/// Inverse of euler_to_rotation. Within 1e-6 of |elevation| = π/2 the
/// cyclorotation is set to 0 and the azimuth absorbs the free angle.
EulerAngles rotation_to_euler(const RotationMatrix& r);

/// Angle of the relative rotation r1ᵀr2, in [0, π].
double geodesic_distance(const RotationMatrix& r1, const RotationMatrix& r2);

/// Circular distance between two azimuths, in [0, π].
double azimuth_distance(double a1, double a2);

/// Rz(π) · r.
RotationMatrix pi_flip(const RotationMatrix& r);

/// Azimuth reflection φ → (−φ) mod 2π.
double z_reflect_azimuth(double azimuth);

/// Rodrigues map from an axis-angle vector to a rotation.
RotationMatrix rotation_from_axis_angle(const Eigen::Vector3d& omega);

}  // namespace vkp
