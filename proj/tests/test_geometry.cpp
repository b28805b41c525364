#include "comok/primitives.hpp"
#include "comok/scene.hpp"

#include "doctest.h"

using namespace comok;
using geom::gjk_distance;
using geom::sample_surface;
using geom::signed_distance;

namespace {

Primitive random_primitive(Rng& rng) {
  const int kind = rng.uniform_int(0, 3);
  const Pose lp(Rotation::from_rotvec(Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                                           rng.uniform(-1.0, 1.0))),
                Vec3(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02),
                     rng.uniform(-0.02, 0.02)));
  switch (kind) {
    case 0:
      return Primitive::box(Vec3(rng.uniform(0.02, 0.1), rng.uniform(0.02, 0.1),
                                 rng.uniform(0.02, 0.1)), lp);
    case 1:
      return Primitive::cylinder(rng.uniform(0.01, 0.05), rng.uniform(0.02, 0.08), lp);
    case 2:
      return Primitive::capsule(rng.uniform(0.01, 0.04), rng.uniform(0.02, 0.06), lp);
    default:
      return Primitive::sphere(rng.uniform(0.01, 0.06), lp);
  }
}

Pose random_world(Rng& rng, double spread) {
  return Pose(Rotation::from_rotvec(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                         rng.uniform(-1, 1))),
              Vec3(rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                   rng.uniform(-spread, spread)));
}

}  // namespace

TEST_CASE("signed distance sign agrees with the support-based containment") {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const Primitive p = random_primitive(rng);
    const Pose w = random_world(rng, 0.1);
    // Surface samples have sdf ~ 0.
    for (int i = 0; i < 20; ++i) {
      const Vec3 s = sample_surface(p, w, rng);
      CHECK(std::abs(signed_distance(p, w, s)) < 1e-9);
    }
  }
}

TEST_CASE("gjk distance between two spheres is exact") {
  const Primitive a = Primitive::sphere(0.05);
  const Primitive b = Primitive::sphere(0.03);
  const Pose wa(Rotation::identity(), Vec3(0, 0, 0));
  const Pose wb(Rotation::identity(), Vec3(0.2, 0, 0));
  CHECK(gjk_distance(a, wa, b, wb) == doctest::Approx(0.2 - 0.08).epsilon(1e-6));
  const Pose wc(Rotation::identity(), Vec3(0.05, 0, 0));  // overlapping
  CHECK(gjk_distance(a, wa, b, wc) == doctest::Approx(0.0));
}

TEST_CASE("gjk distance between boxes matches the axis-aligned gap") {
  const Primitive a = Primitive::box(Vec3(0.1, 0.1, 0.1));
  const Primitive b = Primitive::box(Vec3(0.04, 0.04, 0.04));
  const Pose wa;
  const Pose wb(Rotation::identity(), Vec3(0.1, 0, 0));
  CHECK(gjk_distance(a, wa, b, wb) == doctest::Approx(0.1 - 0.05 - 0.02).epsilon(1e-6));
}

TEST_CASE("gjk agrees with a dense sampling penetration oracle") {
  // If GJK reports separation, no surface sample of A may be inside B by more
  // than 1 mm, and vice versa; if it reports contact, some pair of samples
  // must come close. Statistical oracle over random pairs.
  Rng rng(22);
  int checked = 0, disagreements = 0;
  for (int t = 0; t < 200; ++t) {
    const Primitive a = random_primitive(rng);
    const Primitive b = random_primitive(rng);
    const Pose wa = random_world(rng, 0.05);
    const Pose wb = random_world(rng, 0.05);
    const double d = gjk_distance(a, wa, b, wb);
    double min_sdf = 1e9;
    for (int i = 0; i < 500; ++i) {
      min_sdf = std::min(min_sdf, signed_distance(b, wb, sample_surface(a, wa, rng)));
      min_sdf = std::min(min_sdf, signed_distance(a, wa, sample_surface(b, wb, rng)));
    }
    ++checked;
    if (d > 1e-6 && min_sdf < -1e-3) ++disagreements;       // separated but penetrating
    if (d == 0.0 && min_sdf > 1e-3) ++disagreements;        // touching but clearly apart
    if (d > 1e-3 && std::abs(min_sdf) > 1e-9 && min_sdf < d - 2e-3) ++disagreements;
  }
  CHECK(checked == 200);
  // >= 99.9 percent agreement per the dense-sampling oracle
  CHECK(disagreements == 0);
}

TEST_CASE("surface sampling is area weighted across primitives") {
  // A 1x1x1 box has area 6; a sphere of radius 0.5 has area pi. Sampling a
  // two-primitive object should split samples by area.
  Rng rng(23);
  const Primitive box = Primitive::box(Vec3(1, 1, 1));
  const Primitive sph =
      Primitive::sphere(0.5, Pose(Rotation::identity(), Vec3(5, 0, 0)));  // disjoint
  const double a_box = box.surface_area();
  const double a_sph = sph.surface_area();
  int in_box = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(0.0, a_box + a_sph);
    const Vec3 p = u < a_box ? sample_surface(box, Pose(), rng)
                             : sample_surface(sph, Pose(), rng);
    if (p.x() < 2.0) ++in_box;
  }
  CHECK(static_cast<double>(in_box) / n ==
        doctest::Approx(a_box / (a_box + a_sph)).epsilon(0.03));
}

TEST_CASE("gripper model fingertips straddle the opening") {
  GripperSpec spec;
  const ObjectModel g = make_gripper_model(spec, spec.max_opening);
  // Fingertips at z=0; body extends along -z.
  double max_z = -1e9;
  Rng rng(24);
  for (const auto& prim : g.primitives) {
    for (int i = 0; i < 200; ++i) {
      max_z = std::max(max_z, sample_surface(prim, Pose(), rng).z());
    }
  }
  CHECK(max_z <= 1e-9);
  // Interior of the opening is free.
  for (const auto& prim : g.primitives) {
    CHECK(signed_distance(prim, Pose(), Vec3(0, 0, -0.01)) > 0.0);
  }
}
