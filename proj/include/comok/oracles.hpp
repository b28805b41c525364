#pragma once

#include <set>
#include <string>
#include <vector>

#include "comok/action.hpp"
#include "comok/scene.hpp"

namespace comok {

struct OracleConfig {
  double place_height_tol = 0.01;        // 1 cm to the table
  double place_tilt_tol = 15.0 * M_PI / 180.0;
  double table_penetration_tol = 0.001;  // 1 mm
  double antipodal_tol = 15.0 * M_PI / 180.0;
  double rack_axis_tol = 0.005;          // 0.5 cm off-axis
  double rack_depth_min = 0.01;          // 1 cm past the tip
  double cable_vertical_tol = 15.0 * M_PI / 180.0;
  GripperSpec gripper;
};

// True iff any primitive of `body` at `body_pose` penetrates any primitive of
// a scene object not listed in `ignore`.
bool collide(const ObjectModel& body, const Pose& body_pose, const Scene& scene,
             const std::set<std::string>& ignore);

// Pairwise object separation (GJK); <= 0 means touching/penetrating.
double object_clearance(const PlacedObject& a, const PlacedObject& b);

struct GraspContact {
  bool found = false;
  double width = 0.0;
  Vec3 left, right;  // contact points, world
};
GraspContact grasp_contact(const Scene& scene, const Pose& gripper_pose,
                           const std::string& target_id, const OracleConfig& cfg = {});

bool grasp_valid(const Scene& scene, const Pose& gripper_pose, const std::string& target_id,
                 const OracleConfig& cfg = {});

bool placement_valid(const Scene& scene, const Pose& placement_frame, const ObjectModel& object,
                     const Pose& object_pose, const OracleConfig& cfg = {});

bool rack_valid(const Scene& scene, const CoMOKChain& chain, const OracleConfig& cfg = {});

bool cable_valid(const Scene& scene, const CoMOKChain& chain,
                 const std::vector<Pose>& final_rope_state, const OracleConfig& cfg = {});

// Static stability: object's center of mass projects inside the support
// region of its resting contact.
bool statically_stable(const ObjectModel& object, const Pose& object_pose, double table_height);

// Per-stage oracles evaluated against an already-replayed final scene.
bool executed_chain_valid(const Scene& scene, const CoMOKChain& chain, const Scene& final_scene,
                          const OracleConfig& cfg = {});

// Full replay through motion_select::execute_kinematic plus per-stage oracles.
bool chain_success(const Scene& scene, const CoMOKChain& chain, const OracleConfig& cfg = {});

}  // namespace comok
