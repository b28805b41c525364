#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "comok/rng.hpp"
#include "comok/se3.hpp"

namespace comok {

enum class PrimitiveKind { Box, Cylinder, Capsule, Sphere };

// Convex shape in an object-local frame.
//   Box:      dims = full extents (x, y, z)
//   Cylinder: dims = (radius, half_length, 0), axis along local z
//   Capsule:  dims = (radius, half_length, 0), segment along local z
//   Sphere:   dims = (radius, 0, 0)
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Box;
  Vec3 dims = Vec3::Ones();
  Pose local_pose;

  Primitive() = default;
  Primitive(PrimitiveKind k, const Vec3& d, const Pose& lp = Pose::identity())
      : kind(k), dims(d), local_pose(lp) {}

  static Primitive box(const Vec3& full_extents, const Pose& lp = Pose::identity()) {
    return Primitive(PrimitiveKind::Box, full_extents, lp);
  }
  static Primitive cylinder(double radius, double half_len, const Pose& lp = Pose::identity()) {
    return Primitive(PrimitiveKind::Cylinder, Vec3(radius, half_len, 0.0), lp);
  }
  static Primitive capsule(double radius, double half_len, const Pose& lp = Pose::identity()) {
    return Primitive(PrimitiveKind::Capsule, Vec3(radius, half_len, 0.0), lp);
  }
  static Primitive sphere(double radius, const Pose& lp = Pose::identity()) {
    return Primitive(PrimitiveKind::Sphere, Vec3(radius, 0.0, 0.0), lp);
  }

  double surface_area() const {
    switch (kind) {
      case PrimitiveKind::Box: {
        const Vec3& d = dims;
        return 2.0 * (d.x() * d.y() + d.y() * d.z() + d.z() * d.x());
      }
      case PrimitiveKind::Cylinder: {
        const double r = dims.x(), h = 2.0 * dims.y();
        return 2.0 * M_PI * r * h + 2.0 * M_PI * r * r;
      }
      case PrimitiveKind::Capsule: {
        const double r = dims.x(), h = 2.0 * dims.y();
        return 2.0 * M_PI * r * h + 4.0 * M_PI * r * r;
      }
      case PrimitiveKind::Sphere: {
        const double r = dims.x();
        return 4.0 * M_PI * r * r;
      }
    }
    return 0.0;
  }
};

namespace geom {

// Support point of a primitive placed at world pose, in direction dir (world).
inline Vec3 support(const Primitive& prim, const Pose& world, const Vec3& dir) {
  const Pose w = compose(world, prim.local_pose);
  const Vec3 d_local = w.rotation.inverse() * dir;
  Vec3 p_local = Vec3::Zero();
  switch (prim.kind) {
    case PrimitiveKind::Box: {
      const Vec3 h = 0.5 * prim.dims;
      p_local = Vec3(d_local.x() >= 0 ? h.x() : -h.x(), d_local.y() >= 0 ? h.y() : -h.y(),
                     d_local.z() >= 0 ? h.z() : -h.z());
      break;
    }
    case PrimitiveKind::Cylinder: {
      const double r = prim.dims.x(), hl = prim.dims.y();
      const Vec3 radial(d_local.x(), d_local.y(), 0.0);
      const double rn = radial.norm();
      if (rn > 1e-12) p_local = (r / rn) * radial;
      p_local.z() = d_local.z() >= 0 ? hl : -hl;
      break;
    }
    case PrimitiveKind::Capsule: {
      const double r = prim.dims.x(), hl = prim.dims.y();
      const double dn = d_local.norm();
      const Vec3 dir_n = dn > 1e-12 ? Vec3(d_local / dn) : Vec3(0, 0, 1);
      p_local = r * dir_n;
      p_local.z() += d_local.z() >= 0 ? hl : -hl;
      break;
    }
    case PrimitiveKind::Sphere: {
      const double dn = d_local.norm();
      const Vec3 dir_n = dn > 1e-12 ? Vec3(d_local / dn) : Vec3(0, 0, 1);
      p_local = prim.dims.x() * dir_n;
      break;
    }
  }
  return w * p_local;
}

namespace detail {

// Closest point to the origin on a segment [a,b].
inline Vec3 closest_on_segment(const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double den = ab.squaredNorm();
  if (den < 1e-24) return a;
  const double t = std::clamp(-a.dot(ab) / den, 0.0, 1.0);
  return a + t * ab;
}

// Closest point to the origin on a triangle (Ericson, real-time collision detection).
inline Vec3 closest_on_triangle(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = -a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = -b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = -c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + (vb * denom) * ab + (vc * denom) * ac;
}

// Origin containment in a tetrahedron via barycentric coordinates; degenerate
// tetrahedra report "not inside" (an enclosing face handles them instead).
inline bool origin_in_tetra(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  Eigen::Matrix3d m;
  m.col(0) = b - a;
  m.col(1) = c - a;
  m.col(2) = d - a;
  const double det = m.determinant();
  const double scale = std::max({(b - a).norm(), (c - a).norm(), (d - a).norm(), 1e-12});
  if (std::abs(det) < 1e-12 * scale * scale * scale) return false;
  const Vec3 bary = m.inverse() * (-a);
  const double eps = 1e-12;
  return bary.x() >= -eps && bary.y() >= -eps && bary.z() >= -eps &&
         bary.sum() <= 1.0 + eps;
}

}  // namespace detail

// GJK distance between two world-placed primitives; 0 means intersection.
// The simplex is reduced to the sub-simplex supporting the closest point
// each iteration (Johnson-style), so it never cycles on stale vertices.
inline double gjk_distance(const Primitive& pa, const Pose& wa, const Primitive& pb,
                           const Pose& wb) {
  auto sup = [&](const Vec3& d) { return support(pa, wa, d) - support(pb, wb, -d); };

  std::vector<Vec3> simplex;
  simplex.push_back(sup(Vec3(1, 0, 0)));
  Vec3 closest = simplex[0];

  for (int iter = 0; iter < 128; ++iter) {
    if (simplex.size() == 4 && detail::origin_in_tetra(simplex[0], simplex[1], simplex[2],
                                                       simplex[3])) {
      return 0.0;
    }

    // Closest point over all sub-simplices, remembering the supporting set.
    const std::size_t n = simplex.size();
    Vec3 best = simplex[0];
    double best_d2 = best.squaredNorm();
    std::vector<std::size_t> support_set = {0};
    auto consider = [&](const Vec3& p, std::initializer_list<std::size_t> idx) {
      const double d2 = p.squaredNorm();
      if (d2 < best_d2 - 1e-18) {
        best_d2 = d2;
        best = p;
        support_set.assign(idx);
      }
    };
    for (std::size_t i = 1; i < n; ++i) consider(simplex[i], {i});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        consider(detail::closest_on_segment(simplex[i], simplex[j]), {i, j});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        for (std::size_t k = j + 1; k < n; ++k)
          consider(detail::closest_on_triangle(simplex[i], simplex[j], simplex[k]), {i, j, k});
    closest = best;

    const double dist = closest.norm();
    if (dist < 1e-10) return 0.0;

    // Keep only the supporting vertices.
    std::vector<Vec3> reduced;
    for (std::size_t i : support_set) reduced.push_back(simplex[i]);
    simplex = std::move(reduced);

    const Vec3 w = sup(-closest);
    // Convergence: the new support cannot get past the plane through the
    // closest point (standard |v|^2 - v.w termination).
    if (dist * dist - closest.dot(w) < 1e-10 * std::max(1.0, dist)) return dist;
    bool duplicate = false;
    for (const auto& s : simplex)
      if ((s - w).squaredNorm() < 1e-20) duplicate = true;
    if (duplicate) return dist;
    simplex.push_back(w);
  }
  return closest.norm();
}

// Signed distance from a world point to the solid primitive (negative inside).
inline double signed_distance(const Primitive& prim, const Pose& world, const Vec3& point) {
  const Pose w = compose(world, prim.local_pose);
  const Vec3 p = inverse(w) * point;
  switch (prim.kind) {
    case PrimitiveKind::Box: {
      const Vec3 h = 0.5 * prim.dims;
      const Vec3 q = p.cwiseAbs() - h;
      const Vec3 qpos = q.cwiseMax(0.0);
      const double outside = qpos.norm();
      const double inside = std::min(std::max({q.x(), q.y(), q.z()}), 0.0);
      return outside + inside;
    }
    case PrimitiveKind::Cylinder: {
      const double r = prim.dims.x(), hl = prim.dims.y();
      const double dr = std::hypot(p.x(), p.y()) - r;
      const double dz = std::abs(p.z()) - hl;
      const double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
      const double inside = std::min(std::max(dr, dz), 0.0);
      return outside + inside;
    }
    case PrimitiveKind::Capsule: {
      const double r = prim.dims.x(), hl = prim.dims.y();
      const Vec3 q(p.x(), p.y(), p.z() - std::clamp(p.z(), -hl, hl));
      return q.norm() - r;
    }
    case PrimitiveKind::Sphere:
      return p.norm() - prim.dims.x();
  }
  return 0.0;
}

// Uniform sample on the primitive surface, returned in world coordinates.
inline Vec3 sample_surface(const Primitive& prim, const Pose& world, Rng& rng) {
  const Pose w = compose(world, prim.local_pose);
  Vec3 p = Vec3::Zero();
  switch (prim.kind) {
    case PrimitiveKind::Box: {
      const Vec3& d = prim.dims;
      const double a_xy = d.x() * d.y(), a_yz = d.y() * d.z(), a_zx = d.z() * d.x();
      const double total = 2.0 * (a_xy + a_yz + a_zx);
      double u = rng.uniform(0.0, total);
      const Vec3 h = 0.5 * d;
      auto pick = [&](double area) {
        if (u < area) return true;
        u -= area;
        return false;
      };
      if (pick(a_xy))
        p = Vec3(rng.uniform(-h.x(), h.x()), rng.uniform(-h.y(), h.y()), h.z());
      else if (pick(a_xy))
        p = Vec3(rng.uniform(-h.x(), h.x()), rng.uniform(-h.y(), h.y()), -h.z());
      else if (pick(a_yz))
        p = Vec3(h.x(), rng.uniform(-h.y(), h.y()), rng.uniform(-h.z(), h.z()));
      else if (pick(a_yz))
        p = Vec3(-h.x(), rng.uniform(-h.y(), h.y()), rng.uniform(-h.z(), h.z()));
      else if (pick(a_zx))
        p = Vec3(rng.uniform(-h.x(), h.x()), h.y(), rng.uniform(-h.z(), h.z()));
      else
        p = Vec3(rng.uniform(-h.x(), h.x()), -h.y(), rng.uniform(-h.z(), h.z()));
      break;
    }
    case PrimitiveKind::Cylinder: {
      const double r = prim.dims.x(), hl = prim.dims.y();
      const double a_side = 2.0 * M_PI * r * 2.0 * hl;
      const double a_cap = M_PI * r * r;
      const double u = rng.uniform(0.0, a_side + 2.0 * a_cap);
      const double phi = rng.uniform(0.0, 2.0 * M_PI);
      if (u < a_side) {
        p = Vec3(r * std::cos(phi), r * std::sin(phi), rng.uniform(-hl, hl));
      } else {
        const double rr = r * std::sqrt(rng.uniform());
        p = Vec3(rr * std::cos(phi), rr * std::sin(phi), u < a_side + a_cap ? hl : -hl);
      }
      break;
    }
    case PrimitiveKind::Capsule: {
      const double r = prim.dims.x(), hl = prim.dims.y();
      const double a_side = 2.0 * M_PI * r * 2.0 * hl;
      const double a_sphere = 4.0 * M_PI * r * r;
      const double u = rng.uniform(0.0, a_side + a_sphere);
      const double phi = rng.uniform(0.0, 2.0 * M_PI);
      if (u < a_side) {
        p = Vec3(r * std::cos(phi), r * std::sin(phi), rng.uniform(-hl, hl));
      } else {
        const double z = rng.uniform(-1.0, 1.0);
        const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        p = r * Vec3(s * std::cos(phi), s * std::sin(phi), z);
        p.z() += z >= 0 ? hl : -hl;
      }
      break;
    }
    case PrimitiveKind::Sphere: {
      const double r = prim.dims.x();
      const double z = rng.uniform(-1.0, 1.0);
      const double phi = rng.uniform(0.0, 2.0 * M_PI);
      const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
      p = r * Vec3(s * std::cos(phi), s * std::sin(phi), z);
      break;
    }
  }
  return w * p;
}

inline const char* kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Box:
      return "box";
    case PrimitiveKind::Cylinder:
      return "cylinder";
    case PrimitiveKind::Capsule:
      return "capsule";
    case PrimitiveKind::Sphere:
      return "sphere";
  }
  return "?";
}

inline PrimitiveKind kind_from_name(const std::string& s) {
  if (s == "box") return PrimitiveKind::Box;
  if (s == "cylinder") return PrimitiveKind::Cylinder;
  if (s == "capsule") return PrimitiveKind::Capsule;
  if (s == "sphere") return PrimitiveKind::Sphere;
  throw std::invalid_argument("unknown primitive kind: " + s);
}

}  // namespace geom
}  // namespace comok
