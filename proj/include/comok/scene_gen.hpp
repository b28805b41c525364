#pragma once

#include <string>
#include <vector>

#include "comok/action.hpp"
#include "comok/rng.hpp"
#include "comok/scene.hpp"

namespace comok {

enum class TaskFamily { Grasp, Place, Cable, Rack };

const char* task_family_name(TaskFamily f);
TaskFamily task_family_from_name(const std::string& s);

struct SceneGenConfig {
  int min_obstacles = 3;
  int max_obstacles = 7;
  int rejection_budget = 1000;
  double table_half_x = 0.45;
  double table_half_y = 0.45;
  double placement_grid = 0.02;  // placement ground-truth grid pitch
  int placement_yaws = 8;
  double pregrasp_offset = 0.10;
  double preplace_height = 0.08;
  double prehang_offset = 0.05;
  double clamp_slot_margin = 0.004;  // slot width = rope diameter + margin
  int max_gt_chains = 256;
  GripperSpec gripper;
};

// Per-stage option sets plus consistent full-chain members; every chain
// member must pass its task oracle.
struct GroundTruth {
  std::vector<std::vector<StageAction>> stage_options;
  std::vector<CoMOKChain> chains;

  bool empty() const { return chains.empty(); }
};

ObjectModel make_mug(double radius, double height, double handle_radius, double wall, Rng& rng);
ObjectModel make_box_object(const Vec3& dims, Rng& rng);
ObjectModel make_bottle(double body_radius, double body_height, double neck_radius,
                        double neck_height, Rng& rng);
ObjectModel make_tripod(double leg_len, double leg_radius, double spread, Rng& rng);
ObjectModel make_rope(int n_segments, double segment_len, double radius, Rng& rng);
ObjectModel make_rack(double stick_len, double stick_radius, double post_height, Rng& rng);
ObjectModel make_clamp(double slot_width, Rng& rng);

// Category-random instances inside the generation ranges.
ObjectModel random_mug(Rng& rng);
ObjectModel random_box(Rng& rng);
ObjectModel random_bottle(Rng& rng);
ObjectModel random_tripod(Rng& rng);

Scene sample_scene(TaskFamily family, Rng& rng, const SceneGenConfig& cfg = {});

PointCloud render_cloud(const Scene& scene, int n_points, Rng& rng);

GroundTruth ground_truth_actions(const Scene& scene, TaskFamily family,
                                 const SceneGenConfig& cfg = {});

// Serialization (versioned).
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
std::string ground_truth_to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const std::string& text);

// Binary cloud format: header + float64 triples + int32 object labels +
// int32 patch labels.
void write_cloud(const std::string& path, const PointCloud& cloud);
PointCloud read_cloud(const std::string& path);

}  // namespace comok
