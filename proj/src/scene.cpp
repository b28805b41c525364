#include "comok/scene.hpp"

#include <stdexcept>

namespace comok {

const char* category_name(Category c) {
  switch (c) {
    case Category::Mug: return "mug";
    case Category::Box: return "box";
    case Category::Bottle: return "bottle";
    case Category::Tripod: return "tripod";
    case Category::Rope: return "rope";
    case Category::Rack: return "rack";
    case Category::Gripper: return "gripper";
    case Category::Clamp: return "clamp";
    case Category::Table: return "table";
    case Category::Obstacle: return "obstacle";
  }
  return "?";
}

Category category_from_name(const std::string& s) {
  if (s == "mug") return Category::Mug;
  if (s == "box") return Category::Box;
  if (s == "bottle") return Category::Bottle;
  if (s == "tripod") return Category::Tripod;
  if (s == "rope") return Category::Rope;
  if (s == "rack") return Category::Rack;
  if (s == "gripper") return Category::Gripper;
  if (s == "clamp") return Category::Clamp;
  if (s == "table") return Category::Table;
  if (s == "obstacle") return Category::Obstacle;
  throw std::invalid_argument("unknown category: " + s);
}

const Pose& ObjectModel::keyframe(const std::string& name, std::size_t variant) const {
  auto it = keyframes.find(name);
  if (it == keyframes.end() || variant >= it->second.size()) {
    throw std::out_of_range("keyframe not found: " + name);
  }
  return it->second[variant];
}

Pose PlacedObject::patch_world(int patch) const {
  if (is_rope()) {
    return segment_poses.at(static_cast<std::size_t>(patch));
  }
  return compose(pose, model.patches.at(static_cast<std::size_t>(patch)));
}

std::vector<std::pair<const Primitive*, Pose>> PlacedObject::world_primitives() const {
  std::vector<std::pair<const Primitive*, Pose>> out;
  out.reserve(model.primitives.size());
  if (is_rope()) {
    // One capsule per segment, carried by the segment frames.
    for (std::size_t i = 0; i < model.primitives.size(); ++i) {
      out.emplace_back(&model.primitives[i], segment_poses[i]);
    }
  } else {
    for (const auto& prim : model.primitives) {
      out.emplace_back(&prim, pose);
    }
  }
  return out;
}

int Scene::find_object(const std::string& id) const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].model.id == id) return static_cast<int>(i);
  }
  return -1;
}

const PlacedObject& Scene::object(const std::string& id) const {
  const int i = find_object(id);
  if (i < 0) throw std::out_of_range("object not in scene: " + id);
  return objects[static_cast<std::size_t>(i)];
}

PlacedObject& Scene::object_mut(const std::string& id) {
  const int i = find_object(id);
  if (i < 0) throw std::out_of_range("object not in scene: " + id);
  return objects[static_cast<std::size_t>(i)];
}

ObjectModel make_gripper_model(const GripperSpec& spec, double opening) {
  ObjectModel g;
  g.id = "gripper";
  g.category = Category::Gripper;
  const double half_open = 0.5 * opening;
  const Vec3 finger(spec.finger_thickness, spec.finger_width, spec.finger_length);
  // Fingertips at z = 0, body extends toward -z (approach is +z).
  const Pose left(Rotation::identity(),
                  Vec3(-(half_open + 0.5 * spec.finger_thickness), 0, -0.5 * spec.finger_length));
  const Pose right(Rotation::identity(),
                   Vec3(half_open + 0.5 * spec.finger_thickness, 0, -0.5 * spec.finger_length));
  g.primitives.push_back(Primitive::box(finger, left));
  g.primitives.push_back(Primitive::box(finger, right));
  const Vec3 palm(opening + 2.0 * spec.finger_thickness, spec.finger_width, spec.palm_depth);
  g.primitives.push_back(Primitive::box(
      palm, Pose(Rotation::identity(), Vec3(0, 0, -spec.finger_length - 0.5 * spec.palm_depth))));
  g.keyframes["tcp"] = {Pose::identity()};
  return g;
}

}  // namespace comok
