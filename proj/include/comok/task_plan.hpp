#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "comok/action.hpp"
#include "comok/scene.hpp"
#include "comok/scene_gen.hpp"

namespace comok {

// World-space axis-aligned box used when an env region is spatial rather
// than object-labelled.
struct RegionBox {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
};

struct StagePlan {
  std::string stage_label;
  Attachment manipulated = GripperTool{};
  std::set<std::string> env_ids;        // default representation
  std::optional<RegionBox> env_box;     // alternative spatial region
  int max_k = 2;                        // action frames this stage predicts
};

struct TaskSpec {
  TaskFamily family = TaskFamily::Grasp;
  std::vector<std::string> targets;  // defaults filled per family when empty
  bool already_grasped = false;
};

// Deterministic stand-in for a learned task planner: a lookup table keyed
// on the task family. Throws std::invalid_argument when a referenced object
// is missing from the scene.
std::vector<StagePlan> plan(const Scene& scene, const TaskSpec& task);

struct StageMasks {
  std::vector<bool> manipulated;  // one bit per cloud point
  std::vector<bool> env;
};
std::vector<StageMasks> attention_masks(const std::vector<StagePlan>& plans,
                                        const PointCloud& cloud);

// Canonical per-family stage-label vocabulary; index order is frozen so the
// label-embedding table in checkpoints stays stable.
const std::vector<std::string>& stage_label_vocabulary();
int stage_label_index(const std::string& label);

}  // namespace comok
