#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "comok/scene.hpp"
#include "comok/se3.hpp"

namespace comok {

// Control-authority cases: the gripper tool itself, a grasped rigid object,
// or one local patch of a grasped deformable object.
struct GripperTool {};
struct RigidObject {
  std::string object_id;
};
struct LocalPatch {
  std::string object_id;
  int patch_id = 0;
};
using Attachment = std::variant<GripperTool, RigidObject, LocalPatch>;

bool attachment_is_gripper(const Attachment& a);
std::string attachment_object(const Attachment& a);  // empty for GripperTool

struct StageAction {
  std::string task_label;
  Attachment attachment = GripperTool{};
  Pose affordance;                // object- or patch-local; identity for GripperTool
  std::vector<Pose> action_seq;   // world frames, length K >= 1
  bool alignment_required = false;
};

struct CoMOKChain {
  std::vector<StageAction> stages;
};

// World poses the manipulated body must take so that its affordance frame
// aligns with each action frame: P_k = T_action_k * affordance^-1.
std::vector<Pose> object_motion(const StageAction& stage, const Pose& current_object_pose);

struct ChainViolation {
  int stage = -1;
  std::string message;
};
std::vector<ChainViolation> validate_chain(const CoMOKChain& chain, const Scene& scene);

// Convert a chain into per-stage end-effector pose sequences. Grasp stages
// emit their action frames verbatim; later stages ride the frozen grasp
// transform H = O^-1 * G.
std::vector<std::vector<Pose>> to_end_effector_traj(const CoMOKChain& chain, const Scene& scene);

// Fixed-size token layout for the denoiser: per stage one affordance slot
// followed by max_k action slots. Gripper-stage affordance slots are present
// in the layout but never predicted (the frame is pinned to identity).
struct TokenSlot {
  int stage = -1;
  int action_index = -1;  // -1 marks the affordance slot
  bool real = false;      // slot backed by actual chain content
  bool predicted = false; // participates in attention and loss
  Pose pose;
  std::string stage_label;
  bool gripper_stage = false;
};

struct TokenLayout {
  int max_stages = 0;
  int max_k = 0;
  std::vector<TokenSlot> slots;  // size max_stages * (1 + max_k)

  int n_slots() const { return static_cast<int>(slots.size()); }
  int n_real() const;
  int n_predicted() const;
};

TokenLayout tokenize(const CoMOKChain& chain, int max_stages, int max_k);
CoMOKChain detokenize(const TokenLayout& layout, const CoMOKChain& chain_template);

// JSON wire format (mirrors the token layout).
std::string chain_to_json(const CoMOKChain& chain);
CoMOKChain chain_from_json(const std::string& text);

}  // namespace comok
