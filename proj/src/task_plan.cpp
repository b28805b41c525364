#include "comok/task_plan.hpp"

#include <stdexcept>

namespace comok {

namespace {

void require_object(const Scene& scene, const std::string& id) {
  if (scene.find_object(id) < 0) {
    throw std::invalid_argument("plan: object missing from scene: " + id);
  }
}

StagePlan grasp_plan(const std::string& label, const std::string& target) {
  StagePlan p;
  p.stage_label = label;
  p.manipulated = GripperTool{};
  p.env_ids = {target};
  p.max_k = 2;
  return p;
}

}  // namespace

std::vector<StagePlan> plan(const Scene& scene, const TaskSpec& task) {
  std::vector<StagePlan> out;
  switch (task.family) {
    case TaskFamily::Grasp: {
      const std::string target = task.targets.empty() ? "target" : task.targets[0];
      require_object(scene, target);
      out.push_back(grasp_plan("grasp:" + target, target));
      break;
    }
    case TaskFamily::Place: {
      const std::string target = task.targets.empty() ? "target" : task.targets[0];
      require_object(scene, target);
      require_object(scene, "table");
      if (!task.already_grasped) out.push_back(grasp_plan("grasp:" + target, target));
      StagePlan place;
      place.stage_label = "place:" + target;
      place.manipulated = RigidObject{target};
      place.env_ids = {"table"};
      place.max_k = 2;
      out.push_back(std::move(place));
      break;
    }
    case TaskFamily::Rack: {
      require_object(scene, "mug");
      require_object(scene, "rack");
      if (!task.already_grasped) out.push_back(grasp_plan("grasp:mug", "mug"));
      StagePlan hang;
      hang.stage_label = "hang:mug";
      hang.manipulated = RigidObject{"mug"};
      hang.env_ids = {"rack"};
      hang.max_k = 3;
      out.push_back(std::move(hang));
      break;
    }
    case TaskFamily::Cable: {
      require_object(scene, "rope");
      require_object(scene, "clamp");
      if (!task.already_grasped) out.push_back(grasp_plan("grasp:rope", "rope"));
      StagePlan insert;
      insert.stage_label = "insert:rope";
      insert.manipulated = LocalPatch{"rope", -1};  // patch chosen by the sampler
      insert.env_ids = {"clamp"};
      insert.max_k = 2;
      out.push_back(std::move(insert));
      break;
    }
  }
  return out;
}

std::vector<StageMasks> attention_masks(const std::vector<StagePlan>& plans,
                                        const PointCloud& cloud) {
  std::vector<StageMasks> out;
  out.reserve(plans.size());
  for (const auto& p : plans) {
    StageMasks m;
    m.manipulated.assign(cloud.size(), false);
    m.env.assign(cloud.size(), false);
    const std::string manip_id = attachment_object(p.manipulated);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (!manip_id.empty() && cloud.object_id[i] == manip_id) m.manipulated[i] = true;
      if (p.env_box) {
        if (p.env_box->contains(cloud.points[i])) m.env[i] = true;
      } else if (p.env_ids.count(cloud.object_id[i]) > 0) {
        m.env[i] = true;
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

const std::vector<std::string>& stage_label_vocabulary() {
  static const std::vector<std::string> vocab = {
      "grasp:target", "place:target", "grasp:mug", "hang:mug", "grasp:rope", "insert:rope",
  };
  return vocab;
}

int stage_label_index(const std::string& label) {
  // Per-patch labels like "grasp:rope:7" share the generic entry.
  const auto second = label.find(':', label.find(':') == std::string::npos
                                            ? label.size()
                                            : label.find(':') + 1);
  const std::string key = second == std::string::npos ? label : label.substr(0, second);
  const auto& vocab = stage_label_vocabulary();
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i] == key) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace comok
