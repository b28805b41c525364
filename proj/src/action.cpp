#include "comok/action.hpp"

#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>

#include "comok/detail/json_util.hpp"

namespace comok {

using nlohmann::json;

bool attachment_is_gripper(const Attachment& a) {
  return std::holds_alternative<GripperTool>(a);
}

std::string attachment_object(const Attachment& a) {
  if (const auto* r = std::get_if<RigidObject>(&a)) return r->object_id;
  if (const auto* p = std::get_if<LocalPatch>(&a)) return p->object_id;
  return {};
}

std::vector<Pose> object_motion(const StageAction& stage, const Pose& current_object_pose) {
  (void)current_object_pose;
  if (attachment_is_gripper(stage.attachment)) {
    throw std::invalid_argument("object_motion: gripper stages move no object");
  }
  std::vector<Pose> out;
  out.reserve(stage.action_seq.size());
  const Pose aff_inv = inverse(stage.affordance);
  for (const auto& action : stage.action_seq) {
    out.push_back(compose(action, aff_inv));
  }
  return out;
}

std::vector<ChainViolation> validate_chain(const CoMOKChain& chain, const Scene& scene) {
  std::vector<ChainViolation> out;
  std::set<std::string> grasped;
  std::set<std::pair<std::string, int>> grasped_patches;
  for (std::size_t i = 0; i < chain.stages.size(); ++i) {
    const auto& st = chain.stages[i];
    const int idx = static_cast<int>(i);
    if (st.action_seq.empty()) {
      out.push_back({idx, "empty action sequence"});
    }
    if (attachment_is_gripper(st.attachment)) {
      if (!approx(st.affordance, Pose::identity(), 1e-9)) {
        out.push_back({idx, "gripper stage must use identity affordance"});
      }
      // The grasp frame is the final action frame; it attaches whatever the
      // gripper closes on. Attachment bookkeeping happens via later stages.
      continue;
    }
    const std::string obj = attachment_object(st.attachment);
    if (scene.find_object(obj) < 0) {
      out.push_back({idx, "attachment references unknown object: " + obj});
      continue;
    }
    // Precedence: some earlier gripper stage must have grasped this object,
    // identified by its task label ("grasp:<object>[:patch]").
    bool grasp_seen = false;
    for (std::size_t j = 0; j < i; ++j) {
      const auto& prev = chain.stages[j];
      if (!attachment_is_gripper(prev.attachment)) continue;
      if (prev.task_label == "grasp:" + obj) {
        grasp_seen = true;
      }
      if (const auto* patch = std::get_if<LocalPatch>(&st.attachment)) {
        if (prev.task_label ==
            "grasp:" + obj + ":" + std::to_string(patch->patch_id)) {
          grasp_seen = true;
        }
      }
    }
    if (const auto* patch = std::get_if<LocalPatch>(&st.attachment)) {
      if (!grasp_seen) {
        out.push_back({idx, "patch stage without matching grasp of " + obj + " patch " +
                                std::to_string(patch->patch_id)});
      }
    } else if (!grasp_seen) {
      out.push_back({idx, "rigid stage without earlier grasp of " + obj});
    }
  }
  return out;
}

std::vector<std::vector<Pose>> to_end_effector_traj(const CoMOKChain& chain, const Scene& scene) {
  std::vector<std::vector<Pose>> out;
  out.reserve(chain.stages.size());

  // Grasp transforms frozen by gripper stages, keyed by task label target.
  std::map<std::string, Pose> grasp_tf;          // object id -> H = O^-1 * G
  std::map<std::string, Pose> patch_grasp_tf;    // "<id>:<patch>" -> H

  for (const auto& st : chain.stages) {
    if (attachment_is_gripper(st.attachment)) {
      out.push_back(st.action_seq);
      // Freeze the grasp transform at the final grasp frame.
      const Pose& grasp = st.action_seq.back();
      auto pos = st.task_label.find("grasp:");
      if (pos == 0) {
        const std::string target = st.task_label.substr(6);
        const auto colon = target.find(':');
        if (colon == std::string::npos) {
          if (scene.find_object(target) >= 0) {
            const Pose obj_pose = scene.object(target).pose;
            grasp_tf[target] = compose(inverse(obj_pose), grasp);
          }
        } else {
          const std::string obj = target.substr(0, colon);
          const int patch = std::stoi(target.substr(colon + 1));
          if (scene.find_object(obj) >= 0) {
            const Pose patch_pose = scene.object(obj).patch_world(patch);
            patch_grasp_tf[target] = compose(inverse(patch_pose), grasp);
            (void)obj;
            (void)patch;
          }
        }
      }
      continue;
    }

    const std::string obj = attachment_object(st.attachment);
    Pose h;
    Pose body_pose;
    if (const auto* patch = std::get_if<LocalPatch>(&st.attachment)) {
      const std::string key = obj + ":" + std::to_string(patch->patch_id);
      auto it = patch_grasp_tf.find(key);
      if (it == patch_grasp_tf.end()) {
        throw std::invalid_argument("to_end_effector_traj: patch never grasped: " + key);
      }
      h = it->second;
      body_pose = scene.object(obj).patch_world(patch->patch_id);
    } else {
      auto it = grasp_tf.find(obj);
      if (it == grasp_tf.end()) {
        throw std::invalid_argument("to_end_effector_traj: object never grasped: " + obj);
      }
      h = it->second;
      body_pose = scene.object(obj).pose;
    }

    const auto body_motion = object_motion(st, body_pose);
    std::vector<Pose> ee;
    ee.reserve(body_motion.size());
    for (const auto& p : body_motion) ee.push_back(compose(p, h));
    out.push_back(std::move(ee));
  }
  return out;
}

int TokenLayout::n_real() const {
  int n = 0;
  for (const auto& s : slots) n += s.real ? 1 : 0;
  return n;
}

int TokenLayout::n_predicted() const {
  int n = 0;
  for (const auto& s : slots) n += s.predicted ? 1 : 0;
  return n;
}

TokenLayout tokenize(const CoMOKChain& chain, int max_stages, int max_k) {
  if (static_cast<int>(chain.stages.size()) > max_stages) {
    throw std::invalid_argument("tokenize: too many stages");
  }
  TokenLayout layout;
  layout.max_stages = max_stages;
  layout.max_k = max_k;
  layout.slots.resize(static_cast<std::size_t>(max_stages) * (1 + max_k));
  for (int s = 0; s < max_stages; ++s) {
    const bool have_stage = s < static_cast<int>(chain.stages.size());
    const StageAction* st = have_stage ? &chain.stages[static_cast<std::size_t>(s)] : nullptr;
    if (st && static_cast<int>(st->action_seq.size()) > max_k) {
      throw std::invalid_argument("tokenize: action sequence exceeds max_k");
    }
    const bool gripper = st && attachment_is_gripper(st->attachment);
    for (int k = -1; k < max_k; ++k) {
      TokenSlot& slot = layout.slots[static_cast<std::size_t>(s * (1 + max_k) + (k + 1))];
      slot.stage = s;
      slot.action_index = k;
      slot.gripper_stage = gripper;
      if (!st) continue;
      slot.stage_label = st->task_label;
      if (k == -1) {
        slot.real = true;
        slot.predicted = !gripper;  // gripper TCP affordance is pinned to identity
        slot.pose = st->affordance;
      } else if (k < static_cast<int>(st->action_seq.size())) {
        slot.real = true;
        slot.predicted = true;
        slot.pose = st->action_seq[static_cast<std::size_t>(k)];
      }
    }
  }
  return layout;
}

CoMOKChain detokenize(const TokenLayout& layout, const CoMOKChain& chain_template) {
  CoMOKChain out = chain_template;
  for (std::size_t s = 0; s < out.stages.size(); ++s) {
    StageAction& st = out.stages[s];
    const std::size_t base = s * static_cast<std::size_t>(1 + layout.max_k);
    const TokenSlot& aff = layout.slots.at(base);
    st.affordance = aff.predicted ? aff.pose : Pose::identity();
    for (std::size_t k = 0; k < st.action_seq.size(); ++k) {
      st.action_seq[k] = layout.slots.at(base + 1 + k).pose;
    }
  }
  return out;
}

namespace {

json attachment_to_json(const Attachment& a) {
  json j;
  if (std::holds_alternative<GripperTool>(a)) {
    j["type"] = "gripper";
  } else if (const auto* r = std::get_if<RigidObject>(&a)) {
    j["type"] = "rigid";
    j["object"] = r->object_id;
  } else if (const auto* p = std::get_if<LocalPatch>(&a)) {
    j["type"] = "patch";
    j["object"] = p->object_id;
    j["patch"] = p->patch_id;
  }
  return j;
}

Attachment attachment_from_json(const json& j) {
  const std::string type = j.at("type");
  if (type == "gripper") return GripperTool{};
  if (type == "rigid") return RigidObject{j.at("object")};
  if (type == "patch") return LocalPatch{j.at("object"), j.at("patch")};
  throw std::invalid_argument("unknown attachment type: " + type);
}

}  // namespace

namespace detail {

json stage_json(const StageAction& st) {
  json js;
  js["label"] = st.task_label;
  js["attachment"] = attachment_to_json(st.attachment);
  js["affordance"] = pose_json(st.affordance);
  js["alignment_required"] = st.alignment_required;
  js["action_seq"] = json::array();
  for (const auto& p : st.action_seq) js["action_seq"].push_back(pose_json(p));
  return js;
}

StageAction stage_from(const json& js) {
  StageAction st;
  st.task_label = js.at("label");
  st.attachment = attachment_from_json(js.at("attachment"));
  st.affordance = pose_from(js.at("affordance"));
  st.alignment_required = js.at("alignment_required");
  for (const auto& jp : js.at("action_seq")) st.action_seq.push_back(pose_from(jp));
  return st;
}

json chain_json(const CoMOKChain& chain) {
  json j;
  j["version"] = 1;
  j["stages"] = json::array();
  for (const auto& st : chain.stages) j["stages"].push_back(stage_json(st));
  return j;
}

CoMOKChain chain_from(const json& j) {
  if (j.at("version").get<int>() != 1) {
    throw std::invalid_argument("chain_from_json: unsupported version");
  }
  CoMOKChain chain;
  for (const auto& js : j.at("stages")) chain.stages.push_back(stage_from(js));
  return chain;
}

}  // namespace detail

std::string chain_to_json(const CoMOKChain& chain) { return detail::chain_json(chain).dump(); }

CoMOKChain chain_from_json(const std::string& text) {
  return detail::chain_from(json::parse(text));
}

}  // namespace comok
