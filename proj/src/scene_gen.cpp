#include "comok/scene_gen.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "comok/detail/json_util.hpp"
#include "comok/oracles.hpp"

namespace comok {

using nlohmann::json;

const char* task_family_name(TaskFamily f) {
  switch (f) {
    case TaskFamily::Grasp: return "grasp";
    case TaskFamily::Place: return "place";
    case TaskFamily::Cable: return "cable";
    case TaskFamily::Rack: return "rack";
  }
  return "?";
}

TaskFamily task_family_from_name(const std::string& s) {
  if (s == "grasp") return TaskFamily::Grasp;
  if (s == "place") return TaskFamily::Place;
  if (s == "cable") return TaskFamily::Cable;
  if (s == "rack") return TaskFamily::Rack;
  throw std::invalid_argument("unknown task family: " + s);
}

// ---------------------------------------------------------------------------
// Object makers
// ---------------------------------------------------------------------------

ObjectModel make_mug(double radius, double height, double handle_radius, double wall, Rng& rng) {
  (void)rng;
  (void)wall;
  if (radius < 0.03 - 1e-12 || radius > 0.06 + 1e-12 || height < 0.07 - 1e-12 ||
      height > 0.13 + 1e-12) {
    throw std::invalid_argument("make_mug: parameters out of generation range");
  }
  ObjectModel m;
  m.id = "mug";
  m.category = Category::Mug;
  // Solid body, bottom at z = 0.
  m.primitives.push_back(
      Primitive::cylinder(radius, 0.5 * height, Pose(Rotation::identity(), Vec3(0, 0, 0.5 * height))));

  // Handle: rectangular capsule arc on the +x side; the opening between the
  // body wall and the outer capsule is what a rack stick threads through.
  const double hr = 0.006;  // handle tube radius
  const double reach = handle_radius;
  const double z_lo = 0.25 * height, z_hi = 0.75 * height;
  const Vec3 a(radius, 0, z_lo), b(radius + reach, 0, z_lo);
  const Vec3 c(radius + reach, 0, z_hi), d(radius, 0, z_hi);
  auto seg_capsule = [&](const Vec3& p, const Vec3& q) {
    const Vec3 mid = 0.5 * (p + q);
    const Vec3 dir = (q - p).normalized();
    // rotate local z onto dir
    const Eigen::Quaterniond qr = Eigen::Quaterniond::FromTwoVectors(Vec3(0, 0, 1), dir);
    return Primitive::capsule(hr, 0.5 * (q - p).norm(), Pose(Rotation(qr), mid));
  };
  m.primitives.push_back(seg_capsule(a, b));
  m.primitives.push_back(seg_capsule(b, c));
  m.primitives.push_back(seg_capsule(c, d));

  // Keyframes. bottom_center z points up into the object; handle_center z is
  // the axis through the handle opening (object y).
  m.keyframes["bottom_center"] = {Pose::identity()};
  m.keyframes["rim"] = {Pose(Rotation::identity(), Vec3(0, 0, height))};
  Mat3 hc;
  hc.col(0) = Vec3(0, 0, 1);   // handle x = object up
  hc.col(1) = Vec3(1, 0, 0);
  hc.col(2) = Vec3(0, 1, 0);   // opening axis
  m.keyframes["handle_center"] = {
      Pose(Rotation(hc), Vec3(radius + 0.5 * reach, 0, 0.5 * height))};
  return m;
}

ObjectModel make_box_object(const Vec3& dims, Rng& rng) {
  (void)rng;
  if ((dims.array() <= 0.0).any() || (dims.array() > 0.3).any()) {
    throw std::invalid_argument("make_box_object: dims out of range");
  }
  ObjectModel m;
  m.id = "box";
  m.category = Category::Box;
  m.primitives.push_back(Primitive::box(dims));
  // One bottom_center per face, z-axis pointing into the object (up when the
  // face rests on the table).
  std::vector<Pose> variants;
  const Vec3 h = 0.5 * dims;
  auto face = [&](const Vec3& inward, const Vec3& center) {
    Mat3 r;
    r.col(2) = inward;
    r.col(0) = std::abs(inward.z()) > 0.9 ? Vec3(1, 0, 0) : Vec3(0, 0, 1);
    r.col(0) -= r.col(0).dot(inward) * inward;
    r.col(0).normalize();
    r.col(1) = inward.cross(r.col(0));
    variants.emplace_back(Rotation(r), center);
  };
  face(Vec3(0, 0, 1), Vec3(0, 0, -h.z()));
  face(Vec3(0, 0, -1), Vec3(0, 0, h.z()));
  face(Vec3(1, 0, 0), Vec3(-h.x(), 0, 0));
  face(Vec3(-1, 0, 0), Vec3(h.x(), 0, 0));
  face(Vec3(0, 1, 0), Vec3(0, -h.y(), 0));
  face(Vec3(0, -1, 0), Vec3(0, h.y(), 0));
  m.keyframes["bottom_center"] = variants;
  return m;
}

ObjectModel make_bottle(double body_radius, double body_height, double neck_radius,
                        double neck_height, Rng& rng) {
  (void)rng;
  if (body_radius <= 0.0 || body_radius > 0.05 || body_height < 0.08 || body_height > 0.25) {
    throw std::invalid_argument("make_bottle: parameters out of range");
  }
  ObjectModel m;
  m.id = "bottle";
  m.category = Category::Bottle;
  m.primitives.push_back(Primitive::cylinder(
      body_radius, 0.5 * body_height, Pose(Rotation::identity(), Vec3(0, 0, 0.5 * body_height))));
  m.primitives.push_back(
      Primitive::cylinder(neck_radius, 0.5 * neck_height,
                          Pose(Rotation::identity(), Vec3(0, 0, body_height + 0.5 * neck_height))));
  // Single upright resting face.
  m.keyframes["bottom_center"] = {Pose::identity()};
  return m;
}

ObjectModel make_tripod(double leg_len, double leg_radius, double spread, Rng& rng) {
  (void)rng;
  if (leg_len < 0.06 || leg_len > 0.3 || spread <= 0.0 || spread >= 1.2) {
    throw std::invalid_argument("make_tripod: parameters out of range");
  }
  ObjectModel m;
  m.id = "tripod";
  m.category = Category::Tripod;
  // Apex on the z axis, feet on a circle in the z=0 plane.
  const double foot_r = leg_len * std::sin(spread);
  const double apex_z = leg_len * std::cos(spread);
  m.primitives.push_back(Primitive::sphere(0.02, Pose(Rotation::identity(), Vec3(0, 0, apex_z))));
  for (int i = 0; i < 3; ++i) {
    const double phi = 2.0 * M_PI * i / 3.0;
    const Vec3 foot(foot_r * std::cos(phi), foot_r * std::sin(phi), 0.0);
    const Vec3 apex(0, 0, apex_z);
    const Vec3 mid = 0.5 * (foot + apex);
    const Eigen::Quaterniond q =
        Eigen::Quaterniond::FromTwoVectors(Vec3(0, 0, 1), (apex - foot).normalized());
    m.primitives.push_back(
        Primitive::capsule(leg_radius, 0.5 * (apex - foot).norm() - leg_radius,
                           Pose(Rotation(q), mid + Vec3(0, 0, 0))));
  }
  // Feet rest on z = -leg_radius ... capsule tips extend leg_radius below the
  // segment ends; resting plane is z = -leg_radius relative to foot points.
  m.keyframes["bottom_center"] = {Pose(Rotation::identity(), Vec3(0, 0, -leg_radius))};
  return m;
}

ObjectModel make_rope(int n_segments, double segment_len, double radius, Rng& rng) {
  (void)rng;
  if (n_segments < 4) throw std::invalid_argument("make_rope: need >= 4 segments");
  ObjectModel m;
  m.id = "rope";
  m.category = Category::Rope;
  m.deformable = true;
  m.rope_segments = n_segments;
  m.rope_segment_len = segment_len;
  m.rope_radius = radius;
  // Patch i frame at the segment origin, x along the segment. The capsule is
  // carried by the patch frame (local z rotated onto x).
  const Eigen::Quaterniond z_to_x = Eigen::Quaterniond::FromTwoVectors(Vec3(0, 0, 1), Vec3(1, 0, 0));
  for (int i = 0; i < n_segments; ++i) {
    m.patches.emplace_back(Rotation::identity(), Vec3(i * segment_len, 0, 0));
    m.primitives.push_back(
        Primitive::capsule(radius, 0.5 * segment_len, Pose(Rotation(z_to_x), Vec3::Zero())));
  }
  return m;
}

ObjectModel make_rack(double stick_len, double stick_radius, double post_height, Rng& rng) {
  (void)rng;
  if (stick_len < 0.08) throw std::invalid_argument("make_rack: stick too short");
  ObjectModel m;
  m.id = "rack";
  m.category = Category::Rack;
  m.primitives.push_back(
      Primitive::box(Vec3(0.12, 0.12, 0.02), Pose(Rotation::identity(), Vec3(0, 0, 0.01))));
  m.primitives.push_back(Primitive::cylinder(
      0.012, 0.5 * post_height, Pose(Rotation::identity(), Vec3(0, 0, 0.02 + 0.5 * post_height))));
  const double z_stick = 0.02 + post_height;
  const Eigen::Quaterniond z_to_x = Eigen::Quaterniond::FromTwoVectors(Vec3(0, 0, 1), Vec3(1, 0, 0));
  m.primitives.push_back(Primitive::cylinder(
      stick_radius, 0.5 * stick_len, Pose(Rotation(z_to_x), Vec3(0.5 * stick_len, 0, z_stick))));
  // stick_tip z-axis points back along the stick toward the base.
  Mat3 r;
  r.col(2) = Vec3(-1, 0, 0);
  r.col(0) = Vec3(0, 0, 1);
  r.col(1) = r.col(2).cross(r.col(0));
  m.keyframes["stick_tip"] = {Pose(Rotation(r), Vec3(stick_len, 0, z_stick))};
  return m;
}

ObjectModel make_clamp(double slot_width, Rng& rng) {
  (void)rng;
  ObjectModel m;
  m.id = "clamp";
  m.category = Category::Clamp;
  const double jaw_w = 0.02, jaw_depth = 0.05, jaw_height = 0.05;
  // Two jaws separated by the slot along local x; slot runs through local y.
  m.primitives.push_back(Primitive::box(
      Vec3(jaw_w, jaw_depth, jaw_height),
      Pose(Rotation::identity(), Vec3(-(0.5 * slot_width + 0.5 * jaw_w), 0, 0.5 * jaw_height))));
  m.primitives.push_back(Primitive::box(
      Vec3(jaw_w, jaw_depth, jaw_height),
      Pose(Rotation::identity(), Vec3(0.5 * slot_width + 0.5 * jaw_w, 0, 0.5 * jaw_height))));
  m.keyframes["slot_center"] = {Pose(Rotation::identity(), Vec3(0, 0, 0.5 * jaw_height))};
  m.keyframes["slot_entry"] = {Pose(Rotation::identity(), Vec3(0, 0, jaw_height))};
  return m;
}

ObjectModel random_mug(Rng& rng) {
  // Body diameter stays under the gripper opening so diametral grasps exist.
  const double radius = rng.uniform(0.030, 0.037);
  const double height = rng.uniform(0.08, 0.13);
  const double handle = rng.uniform(0.034, 0.044);
  return make_mug(radius, height, handle, 0.004, rng);
}

ObjectModel random_box(Rng& rng) {
  // Keep at least one horizontal extent graspable.
  const double gx = rng.uniform(0.03, 0.07);
  const double gy = rng.uniform(0.04, 0.12);
  const double gz = rng.uniform(0.04, 0.12);
  return make_box_object(Vec3(gx, gy, gz), rng);
}

ObjectModel random_bottle(Rng& rng) {
  const double r = rng.uniform(0.02, 0.037);
  const double h = rng.uniform(0.10, 0.20);
  return make_bottle(r, h, 0.55 * r, rng.uniform(0.02, 0.04), rng);
}

ObjectModel random_tripod(Rng& rng) {
  return make_tripod(rng.uniform(0.08, 0.15), rng.uniform(0.006, 0.01), rng.uniform(0.5, 0.8),
                     rng);
}

// ---------------------------------------------------------------------------
// Scene sampling
// ---------------------------------------------------------------------------

namespace {

ObjectModel make_table(const SceneGenConfig& cfg) {
  ObjectModel t;
  t.id = "table";
  t.category = Category::Table;
  t.primitives.push_back(
      Primitive::box(Vec3(2.0 * cfg.table_half_x, 2.0 * cfg.table_half_y, 0.04)));
  return t;
}

ObjectModel random_obstacle(Rng& rng, int index) {
  ObjectModel m;
  m.id = "obstacle" + std::to_string(index);
  m.category = Category::Obstacle;
  const int kind = rng.uniform_int(0, 2);
  if (kind == 0) {
    const Vec3 d(rng.uniform(0.03, 0.08), rng.uniform(0.03, 0.08), rng.uniform(0.03, 0.10));
    m.primitives.push_back(Primitive::box(d, Pose(Rotation::identity(), Vec3(0, 0, 0.5 * d.z()))));
  } else if (kind == 1) {
    const double r = rng.uniform(0.015, 0.04), h = rng.uniform(0.04, 0.12);
    m.primitives.push_back(
        Primitive::cylinder(r, 0.5 * h, Pose(Rotation::identity(), Vec3(0, 0, 0.5 * h))));
  } else {
    const double r = rng.uniform(0.02, 0.04);
    m.primitives.push_back(Primitive::sphere(r, Pose(Rotation::identity(), Vec3(0, 0, r))));
  }
  return m;
}

// Lowest world z over all primitives, via support in -z.
double object_min_z(const PlacedObject& obj) {
  double zmin = std::numeric_limits<double>::infinity();
  for (const auto& [prim, pose] : obj.world_primitives()) {
    zmin = std::min(zmin, geom::support(*prim, pose, Vec3(0, 0, -1)).z());
  }
  return zmin;
}

bool collides_with_any(const PlacedObject& candidate, const Scene& scene, double clearance,
                       double task_keepout = 0.0) {
  for (const auto& other : scene.objects) {
    if (other.model.category == Category::Table) continue;
    if (other.model.id == candidate.model.id) continue;
    // Obstacles keep extra distance from task objects so the gripper has
    // working room around grasp/insert/hang approaches.
    const bool keepout = candidate.model.category == Category::Obstacle &&
                         other.model.category != Category::Obstacle;
    if (object_clearance(candidate, other) <= (keepout ? task_keepout : clearance)) return true;
  }
  return false;
}

// Drop `obj` at a random collision-free spot on the table (upright).
bool place_on_table(PlacedObject& obj, Scene& scene, Rng& rng, const SceneGenConfig& cfg,
                    double margin, double task_keepout = 0.10) {
  for (int attempt = 0; attempt < cfg.rejection_budget; ++attempt) {
    const double x = rng.uniform(-cfg.table_half_x + margin, cfg.table_half_x - margin);
    const double y = rng.uniform(-cfg.table_half_y + margin, cfg.table_half_y - margin);
    const double yaw = rng.uniform(0.0, 2.0 * M_PI);
    obj.pose = Pose(Rotation::from_rotvec(Vec3(0, 0, yaw)), Vec3(x, y, scene.table_height));
    // Shift up so the lowest point touches the table exactly.
    const double dz = scene.table_height - object_min_z(obj);
    obj.pose.translation.z() += dz;
    if (!collides_with_any(obj, scene, 0.005, task_keepout)) {
      return true;
    }
  }
  return false;
}

std::vector<Pose> random_rope_configuration(const ObjectModel& rope, double table_height,
                                            Rng& rng, const SceneGenConfig& cfg) {
  const double L = rope.rope_segment_len;
  const double z = table_height + rope.rope_radius;
  const double reach = L * rope.rope_segments;
  const double x0 = rng.uniform(-cfg.table_half_x + reach, cfg.table_half_x - reach);
  const double y0 = rng.uniform(-cfg.table_half_y + reach, cfg.table_half_y - reach);
  double heading = rng.uniform(0.0, 2.0 * M_PI);
  std::vector<Pose> poses;
  Vec3 p(x0, y0, z);
  for (int i = 0; i < rope.rope_segments; ++i) {
    poses.emplace_back(Rotation::from_rotvec(Vec3(0, 0, heading)), p);
    heading += rng.uniform(-0.5, 0.5);
    p += L * Vec3(std::cos(heading), std::sin(heading), 0.0);
  }
  return poses;
}

}  // namespace

Scene sample_scene(TaskFamily family, Rng& rng, const SceneGenConfig& cfg) {
  Scene scene;
  scene.table_height = 0.0;
  scene.workspace_min = Vec3(-cfg.table_half_x - 0.05, -cfg.table_half_y - 0.05, -0.06);
  scene.workspace_max = Vec3(cfg.table_half_x + 0.05, cfg.table_half_y + 0.05, 0.7);

  PlacedObject table;
  table.model = make_table(cfg);
  table.pose = Pose(Rotation::identity(), Vec3(0, 0, -0.02));
  scene.objects.push_back(table);

  auto add_on_table = [&](ObjectModel model, double margin) {
    PlacedObject obj;
    obj.model = std::move(model);
    if (!place_on_table(obj, scene, rng, cfg, margin)) {
      throw std::runtime_error("sample_scene: rejection-sampling budget exhausted");
    }
    scene.objects.push_back(std::move(obj));
  };

  switch (family) {
    case TaskFamily::Grasp: {
      // Grasp scenes contain only the object of interest.
      ObjectModel target = (rng.uniform() < 0.5) ? random_bottle(rng) : random_box(rng);
      target.id = "target";
      add_on_table(std::move(target), 0.12);
      return scene;
    }
    case TaskFamily::Place: {
      ObjectModel target = (rng.uniform() < 0.5) ? random_bottle(rng) : random_box(rng);
      target.id = "target";
      add_on_table(std::move(target), 0.12);
      break;
    }
    case TaskFamily::Rack: {
      ObjectModel rack = make_rack(rng.uniform(0.09, 0.13), 0.005, rng.uniform(0.12, 0.16), rng);
      add_on_table(std::move(rack), 0.15);
      ObjectModel mug = random_mug(rng);
      add_on_table(std::move(mug), 0.12);
      break;
    }
    case TaskFamily::Cable: {
      ObjectModel rope = make_rope(8, 0.03, 0.006, rng);
      PlacedObject rope_obj;
      rope_obj.model = rope;
      bool rope_ok = false;
      for (int attempt = 0; attempt < cfg.rejection_budget && !rope_ok; ++attempt) {
        rope_obj.segment_poses = random_rope_configuration(rope, scene.table_height, rng, cfg);
        rope_ok = !collides_with_any(rope_obj, scene, 0.002);
      }
      if (!rope_ok) throw std::runtime_error("sample_scene: rope placement failed");
      scene.objects.push_back(rope_obj);
      ObjectModel clamp = make_clamp(2.0 * rope.rope_radius + cfg.clamp_slot_margin, rng);
      add_on_table(std::move(clamp), 0.12);
      break;
    }
  }

  const int n_obstacles = rng.uniform_int(cfg.min_obstacles, cfg.max_obstacles);
  for (int i = 0; i < n_obstacles; ++i) {
    add_on_table(random_obstacle(rng, i), 0.05);
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Point cloud rendering
// ---------------------------------------------------------------------------

PointCloud render_cloud(const Scene& scene, int n_points, Rng& rng) {
  if (n_points < 1) throw std::invalid_argument("render_cloud: need at least one point");
  struct Entry {
    int object_index;
    int patch;
    const Primitive* prim;
    Pose pose;
    double area;
  };
  std::vector<Entry> entries;
  double total = 0.0;
  for (std::size_t oi = 0; oi < scene.objects.size(); ++oi) {
    const auto& obj = scene.objects[oi];
    const auto prims = obj.world_primitives();
    for (std::size_t pi = 0; pi < prims.size(); ++pi) {
      Entry e;
      e.object_index = static_cast<int>(oi);
      e.patch = obj.is_rope() ? static_cast<int>(pi) : -1;
      e.prim = prims[pi].first;
      e.pose = prims[pi].second;
      e.area = prims[pi].first->surface_area();
      total += e.area;
      entries.push_back(e);
    }
  }
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    double u = rng.uniform(0.0, total);
    const Entry* chosen = &entries.back();
    for (const auto& e : entries) {
      if (u < e.area) {
        chosen = &e;
        break;
      }
      u -= e.area;
    }
    cloud.points.push_back(geom::sample_surface(*chosen->prim, chosen->pose, rng));
    cloud.object_index.push_back(chosen->object_index);
    cloud.object_id.push_back(scene.objects[static_cast<std::size_t>(chosen->object_index)].model.id);
    cloud.patch_id.push_back(chosen->patch);
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

namespace {

Pose top_down_gripper(double x, double y, double z, double yaw) {
  // Approach +z points world-down; closing axis x stays horizontal.
  const Rotation flip = Rotation::from_rotvec(Vec3(M_PI, 0, 0));
  return Pose(Rotation::from_rotvec(Vec3(0, 0, yaw)) * flip, Vec3(x, y, z));
}

StageAction make_grasp_stage(const std::string& label, const Pose& grasp, double pregrasp) {
  StageAction st;
  st.task_label = label;
  st.attachment = GripperTool{};
  st.affordance = Pose::identity();
  const Pose pre = compose(grasp, Pose(Rotation::identity(), Vec3(0, 0, -pregrasp)));
  st.action_seq = {pre, grasp};
  return st;
}

// Candidate grasp poses for a rigid object, before oracle filtering.
std::vector<Pose> grasp_candidates(const PlacedObject& target, const SceneGenConfig& cfg,
                                   int yaw_count) {
  std::vector<Pose> out;
  const auto& model = target.model;
  const Vec3 pos = target.pose.translation;
  const double base_yaw =
      std::atan2(target.pose.rotation.matrix()(1, 0), target.pose.rotation.matrix()(0, 0));

  auto push_yaws = [&](double x, double y, double z, double yaw0, int count, double span) {
    for (int i = 0; i < count; ++i) {
      out.push_back(top_down_gripper(x, y, z, yaw0 + span * i / std::max(1, count)));
    }
  };

  switch (model.category) {
    case Category::Bottle: {
      const double r = model.primitives[0].dims.x();
      const double h = 2.0 * model.primitives[0].dims.y();
      if (2.0 * r > cfg.gripper.max_opening - 0.004) break;
      for (double frac : {0.35, 0.55, 0.75}) {
        push_yaws(pos.x(), pos.y(), pos.z() + frac * h, 0.0, yaw_count, M_PI);
      }
      break;
    }
    case Category::Mug: {
      const double r = model.primitives[0].dims.x();
      const double h = 2.0 * model.primitives[0].dims.y();
      if (2.0 * r > cfg.gripper.max_opening - 0.004) break;
      for (double frac : {0.4, 0.6, 0.8}) {
        push_yaws(pos.x(), pos.y(), pos.z() + frac * h, base_yaw + M_PI / 2.0, yaw_count, M_PI);
      }
      break;
    }
    case Category::Box: {
      const Vec3 d = model.primitives[0].dims;
      const double h = d.z();
      const Mat3 rot = target.pose.rotation.matrix();
      for (int axis = 0; axis < 2; ++axis) {
        const double width = axis == 0 ? d.x() : d.y();
        if (width > cfg.gripper.max_opening - 0.004) continue;
        const Vec3 world_axis = rot.col(axis);
        const double yaw = std::atan2(world_axis.y(), world_axis.x());
        // Box local origin is its center; heights measured from the bottom.
        for (double frac : {0.5, 0.75}) {
          const double z = pos.z() + (frac - 0.5) * h;
          out.push_back(top_down_gripper(pos.x(), pos.y(), z, yaw));
          out.push_back(top_down_gripper(pos.x(), pos.y(), z, yaw + M_PI));
        }
      }
      break;
    }
    default:
      break;
  }
  return out;
}

std::vector<Pose> rope_patch_grasps(const PlacedObject& rope, int patch) {
  const Pose pw = rope.patch_world(patch);
  const Vec3 dir = pw.rotation.matrix().col(0);
  const double heading = std::atan2(dir.y(), dir.x());
  // Closing axis perpendicular to the segment.
  return {top_down_gripper(pw.translation.x(), pw.translation.y(), pw.translation.z(),
                           heading + M_PI / 2.0),
          top_down_gripper(pw.translation.x(), pw.translation.y(), pw.translation.z(),
                           heading - M_PI / 2.0)};
}

void cap_chains(std::vector<CoMOKChain>& chains, int max_chains) {
  if (static_cast<int>(chains.size()) <= max_chains) return;
  std::vector<CoMOKChain> kept;
  const double stride = static_cast<double>(chains.size()) / max_chains;
  for (int i = 0; i < max_chains; ++i) {
    kept.push_back(chains[static_cast<std::size_t>(i * stride)]);
  }
  chains = std::move(kept);
}

}  // namespace

GroundTruth ground_truth_actions(const Scene& scene, TaskFamily family,
                                 const SceneGenConfig& cfg) {
  GroundTruth gt;
  OracleConfig ocfg;
  ocfg.gripper = cfg.gripper;

  const int yaw_count = 8;

  switch (family) {
    case TaskFamily::Grasp: {
      const auto& target = scene.object("target");
      std::vector<StageAction> options;
      for (const auto& g : grasp_candidates(target, cfg, yaw_count)) {
        if (!grasp_valid(scene, g, "target", ocfg)) continue;
        options.push_back(make_grasp_stage("grasp:target", g, cfg.pregrasp_offset));
      }
      gt.stage_options.push_back(options);
      for (const auto& st : options) gt.chains.push_back(CoMOKChain{{st}});
      break;
    }

    case TaskFamily::Place: {
      const auto& target = scene.object("target");
      std::vector<StageAction> grasps;
      for (const auto& g : grasp_candidates(target, cfg, yaw_count)) {
        if (!grasp_valid(scene, g, "target", ocfg)) continue;
        grasps.push_back(make_grasp_stage("grasp:target", g, cfg.pregrasp_offset));
      }
      std::vector<StageAction> places;
      const auto& variants = target.model.keyframes.at("bottom_center");
      const double margin = 0.08;
      const int nx = static_cast<int>((2.0 * (cfg.table_half_x - margin)) / cfg.placement_grid);
      const int ny = static_cast<int>((2.0 * (cfg.table_half_y - margin)) / cfg.placement_grid);
      for (std::size_t v = 0; v < variants.size(); ++v) {
        const Pose& bc = variants[v];
        for (int ix = 0; ix <= nx; ++ix) {
          for (int iy = 0; iy <= ny; ++iy) {
            const double x = -(cfg.table_half_x - margin) + ix * cfg.placement_grid;
            const double y = -(cfg.table_half_y - margin) + iy * cfg.placement_grid;
            for (int iy2 = 0; iy2 < cfg.placement_yaws; ++iy2) {
              const double yaw = 2.0 * M_PI * iy2 / cfg.placement_yaws;
              const Pose place_frame(Rotation::from_rotvec(Vec3(0, 0, yaw)),
                                     Vec3(x, y, scene.table_height));
              const Pose obj_pose = compose(place_frame, inverse(bc));
              if (!placement_valid(scene, place_frame, target.model, obj_pose, ocfg)) continue;
              if (!statically_stable(target.model, obj_pose, scene.table_height)) continue;
              StageAction st;
              st.task_label = "place:target";
              st.attachment = RigidObject{"target"};
              st.affordance = bc;
              st.action_seq = {
                  Pose(place_frame.rotation,
                       place_frame.translation + Vec3(0, 0, cfg.preplace_height)),
                  place_frame};
              places.push_back(std::move(st));
            }
          }
        }
      }
      gt.stage_options.push_back(grasps);
      gt.stage_options.push_back(places);
      // Pair placements with grasps round-robin; every member is exact.
      if (!grasps.empty()) {
        for (std::size_t i = 0; i < places.size(); ++i) {
          CoMOKChain chain;
          chain.stages.push_back(grasps[i % grasps.size()]);
          chain.stages.push_back(places[i]);
          gt.chains.push_back(std::move(chain));
        }
      }
      cap_chains(gt.chains, cfg.max_gt_chains);
      break;
    }

    case TaskFamily::Rack: {
      const auto& mug = scene.object("mug");
      const auto& rack = scene.object("rack");
      std::vector<StageAction> grasps;
      for (const auto& g : grasp_candidates(mug, cfg, yaw_count)) {
        if (!grasp_valid(scene, g, "mug", ocfg)) continue;
        grasps.push_back(make_grasp_stage("grasp:mug", g, cfg.pregrasp_offset));
      }
      const Pose tip = compose(rack.pose, rack.model.keyframe("stick_tip"));
      const Vec3 axis = tip.rotation.matrix().col(2);  // toward the base
      std::vector<StageAction> hangs;
      for (int flip = 0; flip < 2; ++flip) {
        const Vec3 z = flip == 0 ? axis : Vec3(-axis);
        // Handle-frame x is the mug's up axis; keeping it world-up leaves the
        // mug upright, so the approach from a top-down grasp is translation
        // only and the body threads past the stick without reorienting.
        Vec3 x(0, 0, 1);
        Vec3 y = z.cross(x).normalized();
        x = y.cross(z);
        Mat3 r;
        r.col(0) = x;
        r.col(1) = y;
        r.col(2) = z;
        StageAction st;
        st.task_label = "hang:mug";
        st.attachment = RigidObject{"mug"};
        st.affordance = mug.model.keyframe("handle_center");
        for (double d : {-0.03, 0.0, 0.02}) {
          st.action_seq.emplace_back(Rotation(r), Vec3(tip.translation + d * axis));
        }
        hangs.push_back(std::move(st));
      }
      gt.stage_options.push_back(grasps);
      gt.stage_options.push_back(hangs);
      for (const auto& h : hangs) {
        for (const auto& g : grasps) {
          CoMOKChain chain{{g, h}};
          if (!chain_success(scene, chain, ocfg)) continue;
          gt.chains.push_back(std::move(chain));
        }
      }
      cap_chains(gt.chains, cfg.max_gt_chains);
      break;
    }

    case TaskFamily::Cable: {
      const auto& rope = scene.object("rope");
      const auto& clamp = scene.object("clamp");
      const Pose slot_center = compose(clamp.pose, clamp.model.keyframe("slot_center"));
      const Pose slot_entry = compose(clamp.pose, clamp.model.keyframe("slot_entry"));
      const int last = rope.model.rope_segments - 1;
      for (int patch : {0, last}) {
        for (const auto& g : rope_patch_grasps(rope, patch)) {
          const std::string grasp_label = "grasp:rope:" + std::to_string(patch);
          if (!grasp_valid(scene, g, "rope", ocfg)) continue;
          StageAction grasp_stage = make_grasp_stage(grasp_label, g, cfg.pregrasp_offset);
          for (int down = 0; down < 2; ++down) {
            // Patch x (the segment direction) ends up vertical in the slot.
            Vec3 xaxis = down == 0 ? Vec3(0, 0, -1) : Vec3(0, 0, 1);
            const Vec3 through = compose(clamp.pose, Pose()).rotation.matrix().col(1);
            Vec3 yaxis = through.cross(xaxis).normalized();
            Mat3 r;
            r.col(0) = xaxis;
            r.col(1) = yaxis;
            r.col(2) = xaxis.cross(yaxis);
            StageAction insert;
            insert.task_label = "insert:rope:" + std::to_string(patch);
            insert.attachment = LocalPatch{"rope", patch};
            insert.affordance = Pose::identity();
            insert.action_seq = {
                Pose(Rotation(r), Vec3(slot_entry.translation + Vec3(0, 0, 0.06))),
                Pose(Rotation(r), slot_center.translation)};
            CoMOKChain chain{{grasp_stage, insert}};
            if (!chain_success(scene, chain, ocfg)) continue;
            gt.chains.push_back(std::move(chain));
          }
        }
      }
      // Stage option sets mirror the chains.
      std::vector<StageAction> s0, s1;
      for (const auto& c : gt.chains) {
        s0.push_back(c.stages[0]);
        s1.push_back(c.stages[1]);
      }
      gt.stage_options.push_back(s0);
      gt.stage_options.push_back(s1);
      cap_chains(gt.chains, cfg.max_gt_chains);
      break;
    }
  }
  return gt;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

json primitive_json(const Primitive& p) {
  json j;
  j["kind"] = geom::kind_name(p.kind);
  j["dims"] = {p.dims.x(), p.dims.y(), p.dims.z()};
  j["local"] = detail::pose_json(p.local_pose);
  return j;
}

Primitive primitive_from(const json& j) {
  Primitive p;
  p.kind = geom::kind_from_name(j.at("kind"));
  p.dims = Vec3(j.at("dims").at(0), j.at("dims").at(1), j.at("dims").at(2));
  p.local_pose = detail::pose_from(j.at("local"));
  return p;
}

json model_json(const ObjectModel& m) {
  json j;
  j["id"] = m.id;
  j["category"] = category_name(m.category);
  j["deformable"] = m.deformable;
  j["primitives"] = json::array();
  for (const auto& p : m.primitives) j["primitives"].push_back(primitive_json(p));
  j["keyframes"] = json::object();
  for (const auto& [name, variants] : m.keyframes) {
    json arr = json::array();
    for (const auto& v : variants) arr.push_back(detail::pose_json(v));
    j["keyframes"][name] = arr;
  }
  j["patches"] = json::array();
  for (const auto& p : m.patches) j["patches"].push_back(detail::pose_json(p));
  j["rope_segment_len"] = m.rope_segment_len;
  j["rope_radius"] = m.rope_radius;
  j["rope_segments"] = m.rope_segments;
  return j;
}

ObjectModel model_from(const json& j) {
  ObjectModel m;
  m.id = j.at("id");
  m.category = category_from_name(j.at("category"));
  m.deformable = j.at("deformable");
  for (const auto& jp : j.at("primitives")) m.primitives.push_back(primitive_from(jp));
  for (auto it = j.at("keyframes").begin(); it != j.at("keyframes").end(); ++it) {
    std::vector<Pose> variants;
    for (const auto& jv : it.value()) variants.push_back(detail::pose_from(jv));
    m.keyframes[it.key()] = variants;
  }
  for (const auto& jp : j.at("patches")) m.patches.push_back(detail::pose_from(jp));
  m.rope_segment_len = j.at("rope_segment_len");
  m.rope_radius = j.at("rope_radius");
  m.rope_segments = j.at("rope_segments");
  return m;
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  json j;
  j["version"] = 1;
  j["table_height"] = scene.table_height;
  j["workspace_min"] = {scene.workspace_min.x(), scene.workspace_min.y(), scene.workspace_min.z()};
  j["workspace_max"] = {scene.workspace_max.x(), scene.workspace_max.y(), scene.workspace_max.z()};
  j["objects"] = json::array();
  for (const auto& obj : scene.objects) {
    json jo;
    jo["model"] = model_json(obj.model);
    jo["pose"] = detail::pose_json(obj.pose);
    jo["is_obstacle"] = obj.is_obstacle;
    jo["segment_poses"] = json::array();
    for (const auto& sp : obj.segment_poses) jo["segment_poses"].push_back(detail::pose_json(sp));
    j["objects"].push_back(std::move(jo));
  }
  return j.dump();
}

Scene scene_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("version").get<int>() != 1) throw std::invalid_argument("scene: unsupported version");
  Scene scene;
  scene.table_height = j.at("table_height");
  scene.workspace_min = Vec3(j.at("workspace_min").at(0), j.at("workspace_min").at(1),
                             j.at("workspace_min").at(2));
  scene.workspace_max = Vec3(j.at("workspace_max").at(0), j.at("workspace_max").at(1),
                             j.at("workspace_max").at(2));
  for (const auto& jo : j.at("objects")) {
    PlacedObject obj;
    obj.model = model_from(jo.at("model"));
    obj.pose = detail::pose_from(jo.at("pose"));
    obj.is_obstacle = jo.at("is_obstacle");
    for (const auto& jp : jo.at("segment_poses")) obj.segment_poses.push_back(detail::pose_from(jp));
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

std::string ground_truth_to_json(const GroundTruth& gt) {
  json j;
  j["version"] = 1;
  j["stage_options"] = json::array();
  for (const auto& options : gt.stage_options) {
    json arr = json::array();
    for (const auto& st : options) arr.push_back(detail::stage_json(st));
    j["stage_options"].push_back(std::move(arr));
  }
  j["chains"] = json::array();
  for (const auto& c : gt.chains) j["chains"].push_back(detail::chain_json(c));
  return j.dump();
}

GroundTruth ground_truth_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("version").get<int>() != 1) throw std::invalid_argument("gt: unsupported version");
  GroundTruth gt;
  for (const auto& arr : j.at("stage_options")) {
    std::vector<StageAction> options;
    for (const auto& js : arr) options.push_back(detail::stage_from(js));
    gt.stage_options.push_back(std::move(options));
  }
  for (const auto& jc : j.at("chains")) gt.chains.push_back(detail::chain_from(jc));
  return gt;
}

void write_cloud(const std::string& path, const PointCloud& cloud) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_cloud: cannot open " + path);
  const char magic[8] = {'C', 'M', 'K', 'P', 'C', '0', '0', '1'};
  f.write(magic, 8);
  const std::uint64_t n = cloud.size();
  f.write(reinterpret_cast<const char*>(&n), 8);
  for (std::size_t i = 0; i < n; ++i) {
    double xyz[3] = {cloud.points[i].x(), cloud.points[i].y(), cloud.points[i].z()};
    f.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t v = cloud.object_index[i];
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t v = cloud.patch_id[i];
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
}

PointCloud read_cloud(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_cloud: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (std::memcmp(magic, "CMKPC001", 8) != 0) throw std::runtime_error("read_cloud: bad magic");
  std::uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 8);
  PointCloud cloud;
  cloud.points.resize(n);
  cloud.object_index.resize(n);
  cloud.patch_id.resize(n);
  cloud.object_id.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double xyz[3];
    f.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
    cloud.points[i] = Vec3(xyz[0], xyz[1], xyz[2]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::int32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    cloud.object_index[i] = v;
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::int32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    cloud.patch_id[i] = v;
  }
  if (!f) throw std::runtime_error("read_cloud: truncated file");
  return cloud;
}

}  // namespace comok
