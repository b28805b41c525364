#include "comok/oracles.hpp"

#include <algorithm>
#include <limits>

#include "comok/motion.hpp"

namespace comok {

namespace {

double pair_distance(const Primitive& pa, const Pose& wa, const Primitive& pb, const Pose& wb) {
  return geom::gjk_distance(pa, wa, pb, wb);
}

// Union signed distance over the primitives of one placed object.
double object_sdf(const PlacedObject& obj, const Vec3& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& [prim, pose] : obj.world_primitives()) {
    d = std::min(d, geom::signed_distance(*prim, pose, p));
  }
  return d;
}

Vec3 object_sdf_gradient(const PlacedObject& obj, const Vec3& p) {
  const double h = 1e-5;
  Vec3 g;
  for (int i = 0; i < 3; ++i) {
    Vec3 lo = p, hi = p;
    lo[i] -= h;
    hi[i] += h;
    g[i] = (object_sdf(obj, hi) - object_sdf(obj, lo)) / (2.0 * h);
  }
  const double n = g.norm();
  return n > 1e-12 ? Vec3(g / n) : Vec3(0, 0, 1);
}

double object_min_z(const ObjectModel& model, const Pose& pose) {
  double zmin = std::numeric_limits<double>::infinity();
  for (const auto& prim : model.primitives) {
    zmin = std::min(zmin, geom::support(prim, pose, Vec3(0, 0, -1)).z());
  }
  return zmin;
}

// Andrew monotone chain, returns CCW hull.
std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const auto& a, const auto& b) { return (a - b).norm() < 1e-9; }),
            pts.end());
  if (pts.size() < 3) return pts;
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  const std::size_t lower = k + 1;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  return hull;
}

bool point_in_hull(const std::vector<Eigen::Vector2d>& hull, const Eigen::Vector2d& p,
                   double margin) {
  if (hull.size() < 3) return false;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    const Eigen::Vector2d e = b - a;
    const double c = e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x());
    if (c < margin * e.norm()) return false;  // outside or on the boundary
  }
  return true;
}

}  // namespace

bool collide(const ObjectModel& body, const Pose& body_pose, const Scene& scene,
             const std::set<std::string>& ignore) {
  for (const auto& other : scene.objects) {
    if (ignore.count(other.model.id)) continue;
    for (const auto& [oprim, opose] : other.world_primitives()) {
      for (const auto& bprim : body.primitives) {
        if (pair_distance(bprim, body_pose, *oprim, opose) <= 1e-9) return true;
      }
    }
  }
  return false;
}

double object_clearance(const PlacedObject& a, const PlacedObject& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [pa, wa] : a.world_primitives()) {
    for (const auto& [pb, wb] : b.world_primitives()) {
      best = std::min(best, pair_distance(*pa, wa, *pb, wb));
      if (best <= 0.0) return best;
    }
  }
  return best;
}

GraspContact grasp_contact(const Scene& scene, const Pose& gripper_pose,
                           const std::string& target_id, const OracleConfig& cfg) {
  GraspContact out;
  const auto& target = scene.object(target_id);
  const Vec3 tcp = gripper_pose.translation;
  const Vec3 closing = gripper_pose.rotation.matrix().col(0);

  if (object_sdf(target, tcp) >= 0.0) return out;  // closing line misses the interior

  auto find_contact = [&](const Vec3& dir) -> std::optional<std::pair<double, Vec3>> {
    const double t_max = 0.5 * cfg.gripper.max_opening + 0.01;
    const double step = 0.001;
    double t_prev = 0.0;
    for (double t = step; t <= t_max + step; t += step) {
      if (object_sdf(target, tcp + t * dir) >= 0.0) {
        // bisect [t_prev, t]
        double lo = t_prev, hi = t;
        for (int it = 0; it < 40; ++it) {
          const double mid = 0.5 * (lo + hi);
          (object_sdf(target, tcp + mid * dir) < 0.0 ? lo : hi) = mid;
        }
        const double tc = 0.5 * (lo + hi);
        return std::make_pair(tc, Vec3(tcp + tc * dir));
      }
      t_prev = t;
    }
    return std::nullopt;
  };

  const auto right = find_contact(closing);
  const auto left = find_contact(-closing);
  if (!right || !left) return out;

  const Vec3 n_right = object_sdf_gradient(target, right->second);
  const Vec3 n_left = object_sdf_gradient(target, left->second);
  const double cos_tol = std::cos(cfg.antipodal_tol);
  if (n_right.dot(closing) < cos_tol) return out;
  if (n_left.dot(-closing) < cos_tol) return out;

  out.found = true;
  out.width = right->first + left->first;
  out.right = right->second;
  out.left = left->second;
  return out;
}

bool grasp_valid(const Scene& scene, const Pose& gripper_pose, const std::string& target_id,
                 const OracleConfig& cfg) {
  const auto contact = grasp_contact(scene, gripper_pose, target_id, cfg);
  if (!contact.found) return false;
  if (contact.width > cfg.gripper.max_opening) return false;
  const ObjectModel gripper = make_gripper_model(cfg.gripper, cfg.gripper.max_opening);
  std::set<std::string> ignore{target_id};
  return !collide(gripper, gripper_pose, scene, ignore);
}

bool placement_valid(const Scene& scene, const Pose& placement_frame, const ObjectModel& object,
                     const Pose& object_pose, const OracleConfig& cfg) {
  if (std::abs(placement_frame.translation.z() - scene.table_height) > cfg.place_height_tol) {
    return false;
  }
  const Vec3 up = placement_frame.rotation.matrix().col(2);
  if (std::acos(std::clamp(up.z(), -1.0, 1.0)) > cfg.place_tilt_tol) return false;
  // Table penetration beyond tolerance.
  if (scene.table_height - object_min_z(object, object_pose) > cfg.table_penetration_tol) {
    return false;
  }
  std::set<std::string> ignore{object.id, "table", "gripper"};
  return !collide(object, object_pose, scene, ignore);
}

bool statically_stable(const ObjectModel& object, const Pose& object_pose, double table_height) {
  (void)table_height;
  const double zmin = object_min_z(object, object_pose);

  std::vector<Vec3> candidates;
  for (const auto& prim : object.primitives) {
    const Pose w = compose(object_pose, prim.local_pose);
    switch (prim.kind) {
      case PrimitiveKind::Box: {
        const Vec3 h = 0.5 * prim.dims;
        for (int sx : {-1, 1})
          for (int sy : {-1, 1})
            for (int sz : {-1, 1})
              candidates.push_back(w * Vec3(sx * h.x(), sy * h.y(), sz * h.z()));
        break;
      }
      case PrimitiveKind::Cylinder: {
        const double r = prim.dims.x(), hl = prim.dims.y();
        for (int i = 0; i < 16; ++i) {
          const double phi = 2.0 * M_PI * i / 16;
          for (int s : {-1, 1}) {
            candidates.push_back(w * Vec3(r * std::cos(phi), r * std::sin(phi), s * hl));
          }
        }
        break;
      }
      case PrimitiveKind::Capsule: {
        const double r = prim.dims.x(), hl = prim.dims.y();
        for (int s : {-1, 1}) {
          // lowest point of each end sphere
          const Vec3 center = w * Vec3(0, 0, s * hl);
          candidates.push_back(center + Vec3(0, 0, -r));
        }
        break;
      }
      case PrimitiveKind::Sphere: {
        candidates.push_back(w * Vec3::Zero() + Vec3(0, 0, -prim.dims.x()));
        break;
      }
    }
  }

  std::vector<Eigen::Vector2d> contact_xy;
  for (const auto& c : candidates) {
    if (c.z() <= zmin + 0.001) contact_xy.emplace_back(c.x(), c.y());
  }
  const auto hull = convex_hull(contact_xy);
  if (hull.size() < 3) return false;

  // Volume-weighted center of mass (all primitives are symmetric about their
  // local origin).
  double vol_total = 0.0;
  Vec3 com = Vec3::Zero();
  for (const auto& prim : object.primitives) {
    double v = 0.0;
    switch (prim.kind) {
      case PrimitiveKind::Box:
        v = prim.dims.prod();
        break;
      case PrimitiveKind::Cylinder:
        v = M_PI * prim.dims.x() * prim.dims.x() * 2.0 * prim.dims.y();
        break;
      case PrimitiveKind::Capsule:
        v = M_PI * prim.dims.x() * prim.dims.x() * 2.0 * prim.dims.y() +
            (4.0 / 3.0) * M_PI * std::pow(prim.dims.x(), 3);
        break;
      case PrimitiveKind::Sphere:
        v = (4.0 / 3.0) * M_PI * std::pow(prim.dims.x(), 3);
        break;
    }
    com += v * (compose(object_pose, prim.local_pose).translation);
    vol_total += v;
  }
  com /= vol_total;
  return point_in_hull(hull, Eigen::Vector2d(com.x(), com.y()), 1e-6);
}

namespace {

const StageAction* find_stage_with_prefix(const CoMOKChain& chain, const std::string& prefix) {
  for (const auto& st : chain.stages) {
    if (st.task_label.rfind(prefix, 0) == 0) return &st;
  }
  return nullptr;
}

}  // namespace

bool rack_valid(const Scene& scene, const CoMOKChain& chain, const OracleConfig& cfg) {
  const StageAction* hang = find_stage_with_prefix(chain, "hang:");
  if (!hang || attachment_is_gripper(hang->attachment)) return false;
  const std::string mug_id = attachment_object(hang->attachment);
  if (scene.find_object(mug_id) < 0) return false;
  const auto& mug = scene.object(mug_id);
  const auto& rack = scene.object("rack");
  const Pose tip = compose(rack.pose, rack.model.keyframe("stick_tip"));
  const Vec3 axis = tip.rotation.matrix().col(2);

  // Handle-center world positions implied by each action frame.
  std::vector<Vec3> handle_positions;
  for (const auto& action : hang->action_seq) {
    handle_positions.push_back(action.translation);
  }
  if (handle_positions.size() < 2) return false;

  // Final frame: on-axis within tolerance and deep enough past the tip.
  const Vec3 rel = handle_positions.back() - tip.translation;
  const double depth = rel.dot(axis);
  const double off_axis = (rel - depth * axis).norm();
  if (off_axis > cfg.rack_axis_tol) return false;
  if (depth < cfg.rack_depth_min) return false;

  // Monotone approach along the axis.
  for (std::size_t i = 1; i < handle_positions.size(); ++i) {
    const double d_prev = (handle_positions[i - 1] - tip.translation).dot(axis);
    const double d_cur = (handle_positions[i] - tip.translation).dot(axis);
    if (d_cur <= d_prev) return false;
  }

  // Mug body versus rack along the replayed hang motion.
  const auto body_motion = object_motion(*hang, mug.pose);
  std::set<std::string> ignore;
  for (const auto& obj : scene.objects) {
    if (obj.model.id != "rack") ignore.insert(obj.model.id);
  }
  for (std::size_t i = 0; i + 1 < body_motion.size(); ++i) {
    for (int s = 0; s <= 10; ++s) {
      Pose p;
      try {
        p = interpolate(body_motion[i], body_motion[i + 1], s / 10.0);
      } catch (const std::domain_error&) {
        return false;
      }
      if (collide(mug.model, p, scene, ignore)) return false;
    }
  }
  return true;
}

namespace {

// Slot interior of the clamp, derived from its two jaw boxes.
struct SlotBox {
  Pose world;  // frame at the slot center
  Vec3 half;   // half extents
};

std::optional<SlotBox> clamp_slot(const PlacedObject& clamp) {
  if (clamp.model.primitives.size() < 2) return std::nullopt;
  const auto& j0 = clamp.model.primitives[0];
  const auto& j1 = clamp.model.primitives[1];
  const double gap = std::abs(j1.local_pose.translation.x() - j0.local_pose.translation.x()) -
                     j0.dims.x();
  if (gap <= 0) return std::nullopt;
  SlotBox slot;
  const Vec3 center(0.5 * (j0.local_pose.translation.x() + j1.local_pose.translation.x()),
                    j0.local_pose.translation.y(), j0.local_pose.translation.z());
  slot.world = compose(clamp.pose, Pose(Rotation::identity(), center));
  slot.half = Vec3(0.5 * gap, 0.5 * j0.dims.y(), 0.5 * j0.dims.z());
  return slot;
}

}  // namespace

bool cable_valid(const Scene& scene, const CoMOKChain& chain,
                 const std::vector<Pose>& final_rope_state, const OracleConfig& cfg) {
  const StageAction* insert = find_stage_with_prefix(chain, "insert:");
  if (!insert) return false;
  const auto* patch = std::get_if<LocalPatch>(&insert->attachment);
  if (!patch) return false;
  if (scene.find_object("clamp") < 0) return false;
  const auto slot = clamp_slot(scene.object("clamp"));
  if (!slot) return false;

  // Vertical insertion approach over the last two action frames.
  if (insert->action_seq.size() < 2) return false;
  const Vec3 approach = (insert->action_seq.back().translation -
                         insert->action_seq[insert->action_seq.size() - 2].translation);
  if (approach.norm() < 1e-9) return false;
  const double ang = std::acos(std::clamp(approach.normalized().dot(Vec3(0, 0, -1)), -1.0, 1.0));
  if (ang > cfg.cable_vertical_tol) return false;

  // Final commanded patch midpoint inside the slot volume.
  if (patch->patch_id < 0 || patch->patch_id >= static_cast<int>(final_rope_state.size())) {
    return false;
  }
  const Vec3 mid = final_rope_state[static_cast<std::size_t>(patch->patch_id)].translation;
  const Vec3 local = inverse(slot->world) * mid;
  return (local.cwiseAbs().array() <= slot->half.array() + 1e-9).all();
}

bool executed_chain_valid(const Scene& scene, const CoMOKChain& chain, const Scene& final_scene,
                          const OracleConfig& cfg) {
  for (const auto& st : chain.stages) {
    if (st.task_label.rfind("grasp:", 0) == 0) {
      std::string target = st.task_label.substr(6);
      const auto colon = target.find(':');
      if (colon != std::string::npos) target = target.substr(0, colon);
      if (!grasp_valid(scene, st.action_seq.back(), target, cfg)) return false;
    } else if (st.task_label.rfind("place:", 0) == 0) {
      const std::string target = attachment_object(st.attachment);
      const auto& placed = final_scene.object(target);
      if (!placement_valid(final_scene, st.action_seq.back(), placed.model, placed.pose, cfg)) {
        return false;
      }
      if (!statically_stable(placed.model, placed.pose, final_scene.table_height)) {
        return false;
      }
    } else if (st.task_label.rfind("hang:", 0) == 0) {
      if (!rack_valid(scene, chain, cfg)) return false;
    } else if (st.task_label.rfind("insert:", 0) == 0) {
      const std::string rope_id = attachment_object(st.attachment);
      const auto& rope = final_scene.object(rope_id);
      if (!cable_valid(scene, chain, rope.segment_poses, cfg)) return false;
    }
  }
  return true;
}

bool chain_success(const Scene& scene, const CoMOKChain& chain, const OracleConfig& cfg) {
  if (!validate_chain(chain, scene).empty()) return false;

  MotionConfig mcfg;
  mcfg.gripper = cfg.gripper;
  const auto report = feasible(chain, scene, mcfg);
  if (!report.feasible()) return false;
  const auto exec = execute_kinematic(chain, scene, mcfg);
  if (exec.replay_collision) return false;
  return executed_chain_valid(scene, chain, exec.final_scene, cfg);
}

}  // namespace comok
