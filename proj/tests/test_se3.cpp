#include "comok/se3.hpp"

#include "doctest.h"

using namespace comok;

namespace {

Pose random_pose(Rng& rng, double rot_scale = 2.5, double trans_scale = 1.0) {
  Vec3 w, t;
  for (int i = 0; i < 3; ++i) {
    w[i] = rng.gaussian(0.0, rot_scale / 3.0);
    t[i] = rng.gaussian(0.0, trans_scale);
  }
  if (w.norm() > M_PI - 0.05) w *= (M_PI - 0.05) / w.norm();
  return expmap(Twist(w, t));
}

}  // namespace

TEST_CASE("compose matches the homogeneous-matrix oracle") {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    const Pose c = compose(a, b);
    const Mat4 m = a.matrix() * b.matrix();
    CHECK((c.matrix() - m).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("inverse composes to identity") {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(rng);
    CHECK(approx(compose(a, inverse(a)), Pose::identity(), 1e-9));
    CHECK(approx(compose(inverse(a), a), Pose::identity(), 1e-9));
  }
}

TEST_CASE("exp/log round trip over random twists") {
  Rng rng(13);
  for (int i = 0; i < 10000; ++i) {
    Twist t;
    for (int k = 0; k < 3; ++k) {
      t.omega[k] = rng.gaussian(0.0, 0.8);
      t.v[k] = rng.gaussian(0.0, 0.5);
    }
    if (t.omega.norm() > M_PI - 1e-3) t.omega *= (M_PI - 1e-3) / t.omega.norm();
    const Twist back = logmap(expmap(t));
    CHECK((back.vec6() - t.vec6()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("logmap near the identity uses the Taylor branch") {
  Twist t(Vec3(1e-10, -2e-10, 3e-11), Vec3(0.1, 0.2, -0.3));
  const Twist back = logmap(expmap(t));
  CHECK((back.vec6() - t.vec6()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("logmap throws close to pi") {
  const Pose p(Rotation::from_rotvec(Vec3(M_PI, 0, 0)), Vec3::Zero());
  CHECK_THROWS_AS(logmap(p), std::domain_error);
}

TEST_CASE("interpolate hits both endpoints and the midpoint is on the screw") {
  Rng rng(14);
  const Pose a = random_pose(rng), b = random_pose(rng);
  CHECK(approx(interpolate(a, b, 0.0), a, 1e-9));
  CHECK(approx(interpolate(a, b, 1.0), b, 1e-9));
  const Pose mid = interpolate(a, b, 0.5);
  // Composing two half steps reaches b.
  CHECK(approx(interpolate(mid, b, 1.0), b, 1e-9));
  const Twist full = logmap(compose(inverse(a), b));
  const Twist half = logmap(compose(inverse(a), mid));
  CHECK((half.vec6() - 0.5 * full.vec6()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("geodesic error is symmetric and zero at equality") {
  Rng rng(15);
  const Pose a = random_pose(rng), b = random_pose(rng);
  const auto e1 = geodesic_error(a, b);
  const auto e2 = geodesic_error(b, a);
  CHECK(e1.rot == doctest::Approx(e2.rot));
  CHECK(e1.trans == doctest::Approx(e2.trans));
  const auto z = geodesic_error(a, a);
  CHECK(z.rot < 1e-12);
  CHECK(z.trans < 1e-12);
}

TEST_CASE("perturb is left-multiplicative with the returned twist") {
  Rng rng(16);
  const Pose p = random_pose(rng);
  const auto [noisy, eps] = perturb(p, 0.3, 0.05, rng);
  CHECK(approx(noisy, compose(expmap(eps), p), 1e-12));
}

TEST_CASE("perturb moments match the requested sigmas (Monte Carlo)") {
  Rng rng(17);
  const Pose p;
  const int n = 20000;
  double sum_r2 = 0.0, sum_t2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto [_, eps] = perturb(p, 0.2, 0.05, rng);
    sum_r2 += eps.omega.squaredNorm();
    sum_t2 += eps.v.squaredNorm();
  }
  // E||omega||^2 = 3 sigma_rot^2, likewise for translation.
  CHECK(sum_r2 / n == doctest::Approx(3 * 0.2 * 0.2).epsilon(0.05));
  CHECK(sum_t2 / n == doctest::Approx(3 * 0.05 * 0.05).epsilon(0.05));
}

TEST_CASE("quaternion canonicalization keeps w nonnegative") {
  const Rotation r(Eigen::Quaterniond(-0.5, 0.5, 0.5, 0.5));
  CHECK(r.quat().w() >= 0.0);
  // The negated quaternion is the same rotation.
  const Rotation r2(Eigen::Quaterniond(0.5, -0.5, -0.5, -0.5));
  CHECK(r.angle_to(r2) < 1e-12);
}

TEST_CASE("pose array round trip") {
  Rng rng(18);
  const Pose p = random_pose(rng);
  CHECK(approx(Pose::from_array(p.to_array()), p, 1e-12));
}

TEST_CASE("rng fork gives decorrelated but reproducible streams") {
  Rng a(42), b(42);
  Rng fa = a.fork(3), fb = b.fork(3);
  for (int i = 0; i < 10; ++i) CHECK(fa.next_u64() == fb.next_u64());
  Rng other = a.fork(4);
  CHECK(other.next_u64() != a.fork(3).next_u64());
}
