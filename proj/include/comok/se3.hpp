#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <array>
#include <stdexcept>
#include <utility>

#include "comok/rng.hpp"

namespace comok {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Unit quaternion, canonicalized to w >= 0.
class Rotation {
 public:
  Rotation() : q_(1.0, 0.0, 0.0, 0.0) {}
  explicit Rotation(const Eigen::Quaterniond& q) : q_(q) { canonicalize(); }
  explicit Rotation(const Mat3& m) : q_(m) { canonicalize(); }

  static Rotation identity() { return Rotation(); }

  // Axis-angle; axis need not be normalized when angle encoded in its norm.
  static Rotation from_rotvec(const Vec3& w) {
    const double theta = w.norm();
    if (theta < 1e-12) {
      Eigen::Quaterniond q(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z());
      q.normalize();
      return Rotation(q);
    }
    return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(theta, w / theta)));
  }

  Vec3 to_rotvec() const {
    // angle in [0, pi] thanks to w >= 0 canonicalization
    const Vec3 im(q_.x(), q_.y(), q_.z());
    const double s = im.norm();
    const double angle = 2.0 * std::atan2(s, q_.w());
    if (s < 1e-12) return 2.0 * im;
    return (angle / s) * im;
  }

  Rotation operator*(const Rotation& o) const {
    Eigen::Quaterniond q = q_ * o.q_;
    q.normalize();
    return Rotation(q);
  }

  Rotation inverse() const { return Rotation(q_.conjugate()); }

  Vec3 operator*(const Vec3& v) const { return q_ * v; }

  Mat3 matrix() const { return q_.toRotationMatrix(); }

  double angle_to(const Rotation& o) const {
    const Eigen::Quaterniond rel = q_.conjugate() * o.q_;
    const double s = Vec3(rel.x(), rel.y(), rel.z()).norm();
    return 2.0 * std::atan2(s, std::abs(rel.w()));
  }

  const Eigen::Quaterniond& quat() const { return q_; }

  bool approx(const Rotation& o, double tol = 1e-9) const { return angle_to(o) < tol; }

 private:
  void canonicalize() {
    q_.normalize();
    if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();
  }

  Eigen::Quaterniond q_;
};

struct Twist {
  Vec3 omega = Vec3::Zero();  // rotational tangent, radians
  Vec3 v = Vec3::Zero();      // translational tangent, meters

  Twist() = default;
  Twist(const Vec3& w, const Vec3& t) : omega(w), v(t) {}

  // R^6 layout is rotation-first; this ordering is recorded in checkpoints.
  Eigen::Matrix<double, 6, 1> vec6() const {
    Eigen::Matrix<double, 6, 1> r;
    r << omega, v;
    return r;
  }
  static Twist from_vec6(const Eigen::Matrix<double, 6, 1>& r) {
    return Twist(r.head<3>(), r.tail<3>());
  }
};

struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose identity() { return Pose(); }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation.matrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  // 7-scalar wire layout: qw qx qy qz tx ty tz.
  std::array<double, 7> to_array() const {
    const auto& q = rotation.quat();
    return {q.w(), q.x(), q.y(), q.z(), translation.x(), translation.y(), translation.z()};
  }
  static Pose from_array(const std::array<double, 7>& a) {
    return Pose(Rotation(Eigen::Quaterniond(a[0], a[1], a[2], a[3])), Vec3(a[4], a[5], a[6]));
  }
};

inline Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.rotation * b.rotation, a.rotation * b.translation + a.translation);
}

inline Pose inverse(const Pose& p) {
  const Rotation rinv = p.rotation.inverse();
  return Pose(rinv, -(rinv * p.translation));
}

namespace detail {
inline Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}
}  // namespace detail

// Closed-form SE(3) exponential with the coupled V matrix.
inline Pose expmap(const Twist& t) {
  const double theta = t.omega.norm();
  const Mat3 W = detail::hat(t.omega);
  Mat3 V;
  if (theta < 1e-8) {
    V = Mat3::Identity() + 0.5 * W + (1.0 / 6.0) * W * W;
  } else {
    const double t2 = theta * theta;
    V = Mat3::Identity() + ((1.0 - std::cos(theta)) / t2) * W +
        ((theta - std::sin(theta)) / (t2 * theta)) * W * W;
  }
  return Pose(Rotation::from_rotvec(t.omega), V * t.v);
}

// Canonical log; throws on rotations within 1e-6 of pi.
inline Twist logmap(const Pose& p) {
  const Vec3 w = p.rotation.to_rotvec();
  const double theta = w.norm();
  if (theta > M_PI - 1e-6) {
    throw std::domain_error("logmap: rotation angle too close to pi");
  }
  const Mat3 W = detail::hat(w);
  Mat3 Vinv;
  if (theta < 1e-8) {
    Vinv = Mat3::Identity() - 0.5 * W + (1.0 / 12.0) * W * W;
  } else {
    const double t2 = theta * theta;
    const double c = (1.0 / t2) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
    Vinv = Mat3::Identity() - 0.5 * W + c * W * W;
  }
  return Twist(w, Vinv * p.translation);
}

struct GeodesicError {
  double rot = 0.0;    // radians
  double trans = 0.0;  // meters
};

inline GeodesicError geodesic_error(const Pose& a, const Pose& b) {
  return {a.rotation.angle_to(b.rotation), (a.translation - b.translation).norm()};
}

// Screw interpolation: a * exp(s * log(a^-1 b)).
inline Pose interpolate(const Pose& a, const Pose& b, double s) {
  const Twist rel = logmap(compose(inverse(a), b));
  return compose(a, expmap(Twist(s * rel.omega, s * rel.v)));
}

// Left-multiplicative tangent perturbation: exp(eps) * p with
// eps ~ N(0, diag(sigma_rot^2 I3, sigma_trans^2 I3)).
inline std::pair<Pose, Twist> perturb(const Pose& p, double sigma_rot, double sigma_trans,
                                      Rng& rng) {
  Twist eps;
  for (int i = 0; i < 3; ++i) eps.omega[i] = rng.gaussian(0.0, sigma_rot);
  for (int i = 0; i < 3; ++i) eps.v[i] = rng.gaussian(0.0, sigma_trans);
  return {compose(expmap(eps), p), eps};
}

inline bool approx(const Pose& a, const Pose& b, double tol = 1e-9) {
  const auto e = geodesic_error(a, b);
  return e.rot < tol && e.trans < tol;
}

}  // namespace comok
