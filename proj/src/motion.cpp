#include "comok/motion.hpp"
#include <array>

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "comok/detail/json_util.hpp"
#include "comok/oracles.hpp"

namespace comok {

namespace {

// interpolate() rejects relative rotations at pi; nudge the goal imperceptibly
// and retry so grid-aligned 180 degree yaws remain routable.
Pose interpolate_safe(const Pose& a, const Pose& b, double s) {
  try {
    return interpolate(a, b, s);
  } catch (const std::domain_error&) {
    const Pose b2 = compose(b, Pose(Rotation::from_rotvec(Vec3(1e-5, 1e-5, 0)), Vec3::Zero()));
    return interpolate(a, b2, s);
  }
}

std::vector<Pose> screw_path(const Pose& a, const Pose& b, const MotionConfig& cfg) {
  const auto e = geodesic_error(a, b);
  const int n = std::max({1, static_cast<int>(std::ceil(e.trans / cfg.step_trans)),
                          static_cast<int>(std::ceil(e.rot / cfg.step_rot))});
  std::vector<Pose> path;
  path.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    path.push_back(interpolate_safe(a, b, static_cast<double>(i) / n));
  }
  return path;
}

double path_length(const std::vector<Pose>& path, double lambda) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const auto e = geodesic_error(path[i - 1], path[i]);
    len += e.trans + lambda * e.rot;
  }
  return len;
}

struct ReplayState {
  Scene scene;
  Pose ee;
  Trajectory traj;
  bool collision = false;
  bool within_workspace = true;
  double length = 0.0;
  std::vector<std::string> diag;
};

// Collision state of one end-effector waypoint: gripper body plus whatever is
// attached. The table is handled by a penetration tolerance so that resting
// contact does not read as collision.
bool waypoint_collides(const ReplayState& st, const Pose& ee,
                       const std::optional<AttachedBody>& attached,
                       const std::set<std::string>& ignore, const MotionConfig& cfg) {
  const ObjectModel gripper = make_gripper_model(cfg.gripper, cfg.gripper.max_opening);
  std::set<std::string> grip_ignore = ignore;
  grip_ignore.insert("table");
  if (collide(gripper, ee, st.scene, grip_ignore)) return true;
  // Gripper below the table top.
  double zmin = std::numeric_limits<double>::infinity();
  for (const auto& prim : gripper.primitives) {
    zmin = std::min(zmin, geom::support(prim, ee, Vec3(0, 0, -1)).z());
  }
  if (st.scene.table_height - zmin > cfg.table_penetration_tol) return true;

  if (attached && attached->model) {
    const Pose body_pose = compose(ee, inverse(attached->grasp_tf));
    std::set<std::string> body_ignore = ignore;
    body_ignore.insert("table");
    if (collide(*attached->model, body_pose, st.scene, body_ignore)) return true;
    double bz = std::numeric_limits<double>::infinity();
    for (const auto& prim : attached->model->primitives) {
      bz = std::min(bz, geom::support(prim, body_pose, Vec3(0, 0, -1)).z());
    }
    if (st.scene.table_height - bz > cfg.table_penetration_tol) return true;
  }
  return false;
}

bool path_collides(const ReplayState& st, const std::vector<Pose>& path,
                   const std::optional<AttachedBody>& attached,
                   const std::set<std::string>& ignore, const MotionConfig& cfg) {
  for (const auto& p : path) {
    if (waypoint_collides(st, p, attached, ignore, cfg)) return true;
  }
  return false;
}

}  // namespace

std::optional<std::vector<Pose>> bridge(const Pose& start, const Pose& goal, const Scene& scene,
                                        const std::optional<AttachedBody>& attached,
                                        const std::set<std::string>& ignore,
                                        const MotionConfig& cfg) {
  if (!scene.in_workspace(start.translation) || !scene.in_workspace(goal.translation)) {
    return std::nullopt;
  }
  ReplayState st;
  st.scene = scene;

  auto direct = screw_path(start, goal, cfg);
  if (!path_collides(st, direct, attached, ignore, cfg)) return direct;

  // One lift waypoint: up, across at clearance height, down.
  const double z_clear =
      std::max(start.translation.z(), goal.translation.z()) + cfg.lift_clearance;
  Pose up_start = start, up_goal = goal;
  up_start.translation.z() = z_clear;
  up_goal.translation.z() = z_clear;
  std::vector<Pose> lifted;
  const std::array<const Pose*, 3> legs = {&up_start, &up_goal, &goal};
  for (const Pose* leg_end : legs) {
    const Pose& leg_start = lifted.empty() ? start : lifted.back();
    auto seg = screw_path(leg_start, *leg_end, cfg);
    lifted.insert(lifted.end(), lifted.empty() ? seg.begin() : seg.begin() + 1, seg.end());
  }
  if (!scene.in_workspace(up_start.translation) || !scene.in_workspace(up_goal.translation)) {
    return std::nullopt;
  }
  if (!path_collides(st, lifted, attached, ignore, cfg)) return lifted;
  return std::nullopt;
}

namespace {

// Shared replay core for feasible() and execute_kinematic().
ReplayState replay(const CoMOKChain& chain, const Scene& scene, const MotionConfig& cfg) {
  ReplayState st;
  st.scene = scene;
  st.ee = cfg.home;

  std::map<std::string, Pose> grasp_tf;        // rigid object id -> H
  std::map<std::string, Pose> patch_grasp_tf;  // "<id>:<patch>" -> H

  auto check_ws = [&](const std::vector<Pose>& path) {
    for (const auto& p : path) {
      if (!st.scene.in_workspace(p.translation)) {
        st.within_workspace = false;
      }
    }
  };

  auto run_bridge = [&](const Pose& goal, const std::optional<AttachedBody>& attached,
                        const std::set<std::string>& ignore) -> std::vector<Pose> {
    auto path = bridge(st.ee, goal, st.scene, attached, ignore, cfg);
    if (!path) {
      // Fall back to the direct path so replay can continue and record the
      // collision instead of aborting.
      auto direct = screw_path(st.ee, goal, cfg);
      if (path_collides(st, direct, attached, ignore, cfg)) st.collision = true;
      return direct;
    }
    return *path;
  };

  for (const auto& stage : chain.stages) {
    std::vector<Pose> stage_path;

    if (attachment_is_gripper(stage.attachment)) {
      const std::string label = stage.task_label;
      std::set<std::string> ignore;
      std::string target;
      if (label.rfind("grasp:", 0) == 0) {
        target = label.substr(6);
        const auto colon = target.find(':');
        std::string obj = colon == std::string::npos ? target : target.substr(0, colon);
        ignore.insert(obj);
      }
      // Bridge to the first action frame, then run the action frames.
      auto b = run_bridge(stage.action_seq.front(), std::nullopt, ignore);
      stage_path = b;
      for (std::size_t k = 1; k < stage.action_seq.size(); ++k) {
        auto seg = screw_path(stage_path.back(), stage.action_seq[k], cfg);
        if (path_collides(st, seg, std::nullopt, ignore, cfg)) st.collision = true;
        stage_path.insert(stage_path.end(), seg.begin() + 1, seg.end());
      }
      st.ee = stage_path.back();

      // Freeze the grasp transform.
      if (!target.empty()) {
        const auto colon = target.find(':');
        if (colon == std::string::npos) {
          if (st.scene.find_object(target) >= 0) {
            grasp_tf[target] = compose(inverse(st.scene.object(target).pose), st.ee);
          }
        } else {
          const std::string obj = target.substr(0, colon);
          const int patch = std::stoi(target.substr(colon + 1));
          if (st.scene.find_object(obj) >= 0) {
            patch_grasp_tf[target] =
                compose(inverse(st.scene.object(obj).patch_world(patch)), st.ee);
          }
        }
      }
    } else {
      const std::string obj_id = attachment_object(stage.attachment);
      if (st.scene.find_object(obj_id) < 0) {
        st.diag.push_back("unknown object: " + obj_id);
        st.collision = true;
        break;
      }
      auto& obj = st.scene.object_mut(obj_id);
      const auto* patch = std::get_if<LocalPatch>(&stage.attachment);

      Pose h;
      Pose body_pose;
      if (patch) {
        const std::string key = obj_id + ":" + std::to_string(patch->patch_id);
        auto it = patch_grasp_tf.find(key);
        if (it == patch_grasp_tf.end()) {
          st.diag.push_back("patch never grasped: " + key);
          st.collision = true;
          break;
        }
        h = it->second;
        body_pose = obj.patch_world(patch->patch_id);
      } else {
        auto it = grasp_tf.find(obj_id);
        if (it == grasp_tf.end()) {
          st.diag.push_back("object never grasped: " + obj_id);
          st.collision = true;
          break;
        }
        h = it->second;
        body_pose = obj.pose;
      }

      const auto body_motion = object_motion(stage, body_pose);
      std::vector<Pose> ee_targets;
      for (const auto& p : body_motion) ee_targets.push_back(compose(p, h));

      std::set<std::string> ignore{obj_id};
      AttachedBody attached;
      attached.model = &obj.model;
      attached.grasp_tf = h;
      std::optional<AttachedBody> attached_opt;
      if (!patch) attached_opt = attached;  // patch stages move only the patch

      auto b = run_bridge(ee_targets.front(), attached_opt, ignore);
      stage_path = b;
      for (std::size_t k = 1; k < ee_targets.size(); ++k) {
        auto seg = screw_path(stage_path.back(), ee_targets[k], cfg);
        if (path_collides(st, seg, attached_opt, ignore, cfg)) st.collision = true;
        stage_path.insert(stage_path.end(), seg.begin() + 1, seg.end());
      }
      st.ee = stage_path.back();

      // Apply the motion to the scene.
      if (patch) {
        const double seg_len = obj.model.rope_segment_len;
        for (const auto& ee_pose : stage_path) {
          const Pose leader_pose = compose(ee_pose, inverse(h));
          propagate_rope(obj.segment_poses, patch->patch_id, leader_pose, seg_len);
        }
        // Commanded patch against the scene at the final frames.
        const auto& cap = obj.model.primitives[static_cast<std::size_t>(patch->patch_id)];
        std::set<std::string> patch_ignore{obj_id, "table"};
        for (const auto& other : st.scene.objects) {
          if (patch_ignore.count(other.model.id)) continue;
          for (const auto& [oprim, opose] : other.world_primitives()) {
            if (geom::gjk_distance(cap, obj.segment_poses[static_cast<std::size_t>(
                                            patch->patch_id)],
                                   *oprim, opose) <= 1e-9) {
              st.collision = true;
            }
          }
        }
      } else {
        obj.pose = body_motion.back();
      }
    }

    check_ws(stage_path);
    st.length += path_length(stage_path, cfg.rotation_length_weight);
    st.traj.stage_paths.push_back(std::move(stage_path));
  }
  return st;
}

}  // namespace

FeasibilityReport feasible(const CoMOKChain& chain, const Scene& scene, const MotionConfig& cfg) {
  auto st = replay(chain, scene, cfg);
  FeasibilityReport report;
  report.collision_free = !st.collision;
  report.within_workspace = st.within_workspace;
  report.path_length = st.length;
  report.diagnostics = std::move(st.diag);
  return report;
}

std::optional<std::size_t> select(CandidateSet& candidates, const Scene& scene,
                                  const MotionConfig& cfg) {
  candidates.reports.clear();
  candidates.reports.reserve(candidates.chains.size());
  std::optional<std::size_t> best;
  double best_len = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.chains.size(); ++i) {
    if (!validate_chain(candidates.chains[i], scene).empty()) {
      FeasibilityReport bad;
      bad.diagnostics.push_back("chain invalid");
      candidates.reports.push_back(bad);
      continue;
    }
    auto report = feasible(candidates.chains[i], scene, cfg);
    if (report.feasible() && report.path_length < best_len) {
      best_len = report.path_length;
      best = i;
    }
    candidates.reports.push_back(std::move(report));
  }
  return best;
}

ExecutionResult execute_kinematic(const CoMOKChain& chain, const Scene& scene,
                                  const MotionConfig& cfg) {
  if (!validate_chain(chain, scene).empty()) {
    throw std::invalid_argument("execute_kinematic: chain fails validation");
  }
  auto st = replay(chain, scene, cfg);
  ExecutionResult out;
  out.trajectory = std::move(st.traj);
  out.final_scene = std::move(st.scene);
  out.replay_collision = st.collision || !st.within_workspace;
  return out;
}

void propagate_rope(std::vector<Pose>& segment_poses, int leader, const Pose& leader_pose,
                    double segment_len) {
  const int n = static_cast<int>(segment_poses.size());
  if (leader < 0 || leader >= n) throw std::out_of_range("propagate_rope: bad leader index");
  segment_poses[static_cast<std::size_t>(leader)] = leader_pose;

  auto follow = [&](int from, int to, int step) {
    for (int i = from; i != to; i += step) {
      const Vec3 anchor = segment_poses[static_cast<std::size_t>(i - step)].translation;
      Pose& seg = segment_poses[static_cast<std::size_t>(i)];
      const Vec3 delta = seg.translation - anchor;
      const double d = delta.norm();
      Vec3 dir = d > 1e-12 ? Vec3(delta / d)
                           : segment_poses[static_cast<std::size_t>(i - step)].rotation.matrix().col(0);
      const Vec3 new_pos = anchor + segment_len * dir;
      // Re-aim the x-axis along the chain; minimal rotation from the old frame.
      const Vec3 old_x = seg.rotation.matrix().col(0);
      const Vec3 chain_dir = static_cast<double>(step) * dir;
      const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(old_x, chain_dir);
      seg = Pose(Rotation(q) * seg.rotation, new_pos);
    }
  };
  follow(leader + 1, n, 1);
  follow(leader - 1, -1, -1);
}

std::string trajectory_to_json(const Trajectory& t) {
  nlohmann::json j;
  j["version"] = 1;
  j["stages"] = nlohmann::json::array();
  for (const auto& path : t.stage_paths) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : path) arr.push_back(detail::pose_json(p));
    j["stages"].push_back(std::move(arr));
  }
  return j.dump();
}

void write_trajectory_ply(const std::string& path, const Trajectory& t) {
  std::size_t n = 0;
  for (const auto& sp : t.stage_paths) n += sp.size();
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_trajectory_ply: cannot open " + path);
  f << "ply\nformat ascii 1.0\nelement vertex " << n << "\nproperty float x\nproperty float y\n"
    << "property float z\nelement edge " << (n > 0 ? n - t.stage_paths.size() : 0)
    << "\nproperty int vertex1\nproperty int vertex2\nend_header\n";
  for (const auto& sp : t.stage_paths) {
    for (const auto& p : sp) {
      f << p.translation.x() << " " << p.translation.y() << " " << p.translation.z() << "\n";
    }
  }
  std::size_t base = 0;
  for (const auto& sp : t.stage_paths) {
    for (std::size_t i = 1; i < sp.size(); ++i) {
      f << (base + i - 1) << " " << (base + i) << "\n";
    }
    base += sp.size();
  }
}

}  // namespace comok
