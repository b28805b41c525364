#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "comok/primitives.hpp"
#include "comok/se3.hpp"

namespace comok {

enum class Category { Mug, Box, Bottle, Tripod, Rope, Rack, Gripper, Clamp, Table, Obstacle };

const char* category_name(Category c);
Category category_from_name(const std::string& s);

// Union of analytic primitives with named keypoint frames.
// Keyframes may have several variants (a box has up to 6 bottom_center frames).
struct ObjectModel {
  std::string id;
  Category category = Category::Box;
  std::vector<Primitive> primitives;
  std::map<std::string, std::vector<Pose>> keyframes;
  bool deformable = false;

  // Ropes: one patch frame per capsule segment, given in the rest
  // configuration; x-axis runs along the segment.
  std::vector<Pose> patches;
  double rope_segment_len = 0.0;
  double rope_radius = 0.0;
  int rope_segments = 0;

  const Pose& keyframe(const std::string& name, std::size_t variant = 0) const;
  bool has_keyframe(const std::string& name) const { return keyframes.count(name) > 0; }
};

struct PlacedObject {
  ObjectModel model;
  Pose pose;                        // world pose of the object frame (rigid objects)
  std::vector<Pose> segment_poses;  // world patch/segment frames (ropes only)
  bool is_obstacle = false;

  bool is_rope() const { return model.deformable && !segment_poses.empty(); }
  // World pose of patch i (ropes use segment_poses, rigid objects compose).
  Pose patch_world(int patch) const;
  // All primitives with their world poses, for collision and sampling.
  std::vector<std::pair<const Primitive*, Pose>> world_primitives() const;
};

struct Scene {
  std::vector<PlacedObject> objects;
  double table_height = 0.0;
  Vec3 workspace_min = Vec3(-0.5, -0.5, -0.05);
  Vec3 workspace_max = Vec3(0.5, 0.5, 0.6);

  int find_object(const std::string& id) const;
  const PlacedObject& object(const std::string& id) const;
  PlacedObject& object_mut(const std::string& id);
  bool in_workspace(const Vec3& p) const {
    return (p.array() >= workspace_min.array()).all() && (p.array() <= workspace_max.array()).all();
  }
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<int> object_index;       // index into Scene::objects
  std::vector<std::string> object_id;  // redundant with index, kept for serialization
  std::vector<int> patch_id;           // rope segment id, -1 otherwise

  std::size_t size() const { return points.size(); }
};

// Parallel-jaw gripper constants shared by generation and oracles.
struct GripperSpec {
  double max_opening = 0.08;
  double finger_length = 0.04;
  double finger_width = 0.015;
  double finger_thickness = 0.01;
  double palm_depth = 0.03;
  double pregrasp_offset = 0.10;  // retreat along gripper -z from the grasp pose
};

// Gripper body as primitives placed at a TCP world pose. The TCP sits between
// the fingertips; approach is along +z, closing along x.
ObjectModel make_gripper_model(const GripperSpec& spec, double opening);

}  // namespace comok
