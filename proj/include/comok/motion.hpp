#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "comok/action.hpp"
#include "comok/scene.hpp"

namespace comok {

struct MotionConfig {
  double step_trans = 0.01;            // path discretization, meters
  double step_rot = 5.0 * M_PI / 180.0;
  double lift_clearance = 0.15;        // lift-waypoint height above endpoints
  double rotation_length_weight = 0.1; // lambda, meters per radian
  double table_penetration_tol = 0.002;
  GripperSpec gripper;
  Pose home = Pose(Rotation::from_rotvec(Vec3(M_PI, 0, 0)) *
                       Rotation::from_rotvec(Vec3(0, 0, 0.1234)),
                   Vec3(0, 0, 0.35));  // start end-effector pose, top down
};

struct FeasibilityReport {
  bool collision_free = false;
  bool within_workspace = false;
  double path_length = 0.0;  // meters + lambda * radians
  std::vector<std::string> diagnostics;

  bool feasible() const { return collision_free && within_workspace; }
};

struct Trajectory {
  std::vector<std::vector<Pose>> stage_paths;  // dense end-effector poses per stage
};

struct CandidateSet {
  std::vector<CoMOKChain> chains;
  std::uint64_t seed = 0;
  std::string weights_version;
  std::vector<FeasibilityReport> reports;  // filled by feasibility filtering
};

// Free-space bridge from start to goal: direct screw path, else one lift
// waypoint, else infeasible (empty optional).
struct AttachedBody {
  const ObjectModel* model = nullptr;
  Pose grasp_tf;  // body pose = ee_pose * grasp_tf^-1
};
std::optional<std::vector<Pose>> bridge(const Pose& start, const Pose& goal, const Scene& scene,
                                        const std::optional<AttachedBody>& attached,
                                        const std::set<std::string>& ignore,
                                        const MotionConfig& cfg = {});

FeasibilityReport feasible(const CoMOKChain& chain, const Scene& scene,
                           const MotionConfig& cfg = {});

// Argmin path length among feasible candidates; ties broken by index.
std::optional<std::size_t> select(CandidateSet& candidates, const Scene& scene,
                                  const MotionConfig& cfg = {});

// Kinematic replay; returns the executed trajectory and the mutated scene.
struct ExecutionResult {
  Trajectory trajectory;
  Scene final_scene;
  bool replay_collision = false;
};
ExecutionResult execute_kinematic(const CoMOKChain& chain, const Scene& scene,
                                  const MotionConfig& cfg = {});

// Follow-the-leader propagation: segment `leader` is pinned to `leader_pose`,
// the other segments each move the minimum needed to restore segment length.
void propagate_rope(std::vector<Pose>& segment_poses, int leader, const Pose& leader_pose,
                    double segment_len);

std::string trajectory_to_json(const Trajectory& t);
void write_trajectory_ply(const std::string& path, const Trajectory& t);

}  // namespace comok
