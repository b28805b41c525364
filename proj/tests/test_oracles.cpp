#include "comok/oracles.hpp"

#include "comok/motion.hpp"
#include "comok/scene_gen.hpp"
#include "doctest.h"

using namespace comok;

namespace {

Scene table_only_scene() {
  Scene scene;
  scene.table_height = 0.0;
  PlacedObject table;
  table.model.id = "table";
  table.model.category = Category::Table;
  table.model.primitives.push_back(Primitive::box(Vec3(0.9, 0.9, 0.04)));
  table.pose = Pose(Rotation::identity(), Vec3(0, 0, -0.02));
  scene.objects.push_back(std::move(table));
  return scene;
}

// Ball resting with its lowest point at the frame origin; tilting it about
// that origin barely changes its lowest point, which isolates the height and
// tilt checks from the penetration check.
ObjectModel ball_object() {
  ObjectModel m;
  m.id = "target";
  m.category = Category::Box;
  m.primitives.push_back(Primitive::sphere(0.02, Pose(Rotation::identity(), Vec3(0, 0, 0.02))));
  m.keyframes["bottom_center"] = {Pose::identity()};
  return m;
}

Pose top_down(double x, double y, double z, double yaw = 0.0) {
  return Pose(Rotation::from_rotvec(Vec3(0, 0, yaw)) * Rotation::from_rotvec(Vec3(M_PI, 0, 0)),
              Vec3(x, y, z));
}

}  // namespace

TEST_CASE("placement height tolerance boundary is exact at 1 cm") {
  const Scene scene = table_only_scene();
  const ObjectModel ball = ball_object();
  const Pose ok_frame(Rotation::identity(), Vec3(0.1, 0.1, 0.009));
  const Pose bad_frame(Rotation::identity(), Vec3(0.1, 0.1, 0.011));
  CHECK(placement_valid(scene, ok_frame, ball, ok_frame, {}));
  CHECK(!placement_valid(scene, bad_frame, ball, bad_frame, {}));
}

TEST_CASE("placement tilt tolerance boundary is exact at 15 degrees") {
  const Scene scene = table_only_scene();
  const ObjectModel ball = ball_object();
  const Pose ok_frame(Rotation::from_rotvec(Vec3(14.0 * M_PI / 180.0, 0, 0)), Vec3(0.1, 0.1, 0));
  const Pose bad_frame(Rotation::from_rotvec(Vec3(16.0 * M_PI / 180.0, 0, 0)), Vec3(0.1, 0.1, 0));
  CHECK(placement_valid(scene, ok_frame, ball, ok_frame, {}));
  CHECK(!placement_valid(scene, bad_frame, ball, bad_frame, {}));
}

TEST_CASE("placement rejects table penetration and object overlap") {
  Scene scene = table_only_scene();
  const ObjectModel ball = ball_object();
  const Pose sunk(Rotation::identity(), Vec3(0.1, 0.1, -0.005));
  CHECK(!placement_valid(scene, sunk, ball, sunk, {}));

  PlacedObject blocker;
  blocker.model.id = "obstacle0";
  blocker.model.category = Category::Obstacle;
  blocker.model.primitives.push_back(
      Primitive::box(Vec3(0.05, 0.05, 0.05), Pose(Rotation::identity(), Vec3(0, 0, 0.025))));
  blocker.pose = Pose(Rotation::identity(), Vec3(0.1, 0.1, 0));
  scene.objects.push_back(blocker);
  const Pose onto_blocker(Rotation::identity(), Vec3(0.1, 0.1, 0.0));
  CHECK(!placement_valid(scene, onto_blocker, ball, onto_blocker, {}));
  const Pose clear(Rotation::identity(), Vec3(-0.2, -0.2, 0.0));
  CHECK(placement_valid(scene, clear, ball, clear, {}));
}

TEST_CASE("grasp oracle finds antipodal contacts across a cylinder") {
  Scene scene = table_only_scene();
  Rng rng(51);
  PlacedObject bottle;
  bottle.model = make_bottle(0.03, 0.15, 0.0165, 0.03, rng);
  bottle.model.id = "target";
  bottle.pose = Pose(Rotation::identity(), Vec3(0.1, 0.0, 0.0));
  scene.objects.push_back(bottle);

  const Pose grasp = top_down(0.1, 0.0, 0.08);
  const auto contact = grasp_contact(scene, grasp, "target", {});
  REQUIRE(contact.found);
  CHECK(contact.width == doctest::Approx(0.06).epsilon(0.02));
  CHECK(grasp_valid(scene, grasp, "target", {}));
  // TCP outside the object: no closing line through the interior.
  CHECK(!grasp_valid(scene, top_down(0.3, 0.3, 0.08), "target", {}));
}

TEST_CASE("grasp oracle rejects widths beyond the gripper opening") {
  Scene scene = table_only_scene();
  Rng rng(52);
  PlacedObject slab;
  slab.model = make_box_object(Vec3(0.12, 0.12, 0.06), rng);
  slab.model.id = "target";
  slab.pose = Pose(Rotation::identity(), Vec3(0.1, 0.0, 0.03));
  scene.objects.push_back(slab);
  CHECK(!grasp_valid(scene, top_down(0.1, 0.0, 0.03), "target", {}));
}

TEST_CASE("static stability requires a supporting contact polygon") {
  Rng rng(53);
  const ObjectModel box = make_box_object(Vec3(0.05, 0.08, 0.06), rng);
  const Pose flat(Rotation::identity(), Vec3(0.0, 0.0, 0.03));
  CHECK(statically_stable(box, flat, 0.0));
  // Balanced on one edge: the contact set is a line, not a polygon.
  const Pose edge(Rotation::from_rotvec(Vec3(0.4, 0, 0)), Vec3(0.0, 0.0, 0.05));
  CHECK(!statically_stable(box, edge, 0.0));
}

TEST_CASE("rack oracle enforces the axis tolerance and monotone approach") {
  Rng rng(54);
  const Scene scene = sample_scene(TaskFamily::Rack, rng);
  const GroundTruth gt = ground_truth_actions(scene, TaskFamily::Rack);
  REQUIRE(!gt.empty());
  const CoMOKChain good = gt.chains.front();
  CHECK(rack_valid(scene, good, {}));

  const auto& rack = scene.object("rack");
  const Pose tip = compose(rack.pose, rack.model.keyframe("stick_tip"));
  const Vec3 axis = tip.rotation.matrix().col(2);
  // Pick a horizontal direction perpendicular to the stick axis.
  Vec3 perp = axis.cross(Vec3(0, 0, 1));
  if (perp.norm() < 1e-6) perp = Vec3(1, 0, 0);
  perp.normalize();

  CoMOKChain off_axis = good;
  off_axis.stages.back().action_seq.back().translation += 0.01 * perp;  // > 0.5 cm tolerance
  CHECK(!rack_valid(scene, off_axis, {}));

  CoMOKChain shallow = good;
  shallow.stages.back().action_seq.back().translation -= 0.04 * axis;  // ends before the tip
  CHECK(!rack_valid(scene, shallow, {}));

  CoMOKChain backwards = good;
  std::reverse(backwards.stages.back().action_seq.begin(),
               backwards.stages.back().action_seq.end());
  CHECK(!rack_valid(scene, backwards, {}));
}

TEST_CASE("cable oracle needs a vertical approach into the slot") {
  Rng rng(55);
  const Scene scene = sample_scene(TaskFamily::Cable, rng);
  const GroundTruth gt = ground_truth_actions(scene, TaskFamily::Cable);
  REQUIRE(!gt.empty());
  const CoMOKChain good = gt.chains.front();
  CHECK(chain_success(scene, good, {}));

  // Slanted approach: move the entry waypoint far sideways.
  CoMOKChain slanted = good;
  slanted.stages.back().action_seq.front().translation += Vec3(0.2, 0, 0);
  MotionConfig mcfg;
  const auto exec = execute_kinematic(slanted, scene, mcfg);
  const auto& rope = exec.final_scene.object("rope");
  CHECK(!cable_valid(scene, slanted, rope.segment_poses, {}));
}

TEST_CASE("chain_success rejects chains that fail stage precedence") {
  Rng rng(56);
  const Scene scene = sample_scene(TaskFamily::Place, rng);
  const GroundTruth gt = ground_truth_actions(scene, TaskFamily::Place);
  REQUIRE(!gt.empty());
  CHECK(chain_success(scene, gt.chains.front(), {}));
  CoMOKChain no_grasp;
  no_grasp.stages = {gt.chains.front().stages[1]};  // place without grasp
  CHECK(!chain_success(scene, no_grasp, {}));
}
