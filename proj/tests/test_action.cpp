#include "comok/action.hpp"
#include "comok/scene_gen.hpp"

#include "doctest.h"

using namespace comok;

namespace {

Scene simple_scene() {
  Rng rng(31);
  SceneGenConfig cfg;
  return sample_scene(TaskFamily::Place, rng, cfg);
}

CoMOKChain two_stage_chain(int k0, int k1) {
  CoMOKChain c;
  StageAction g;
  g.task_label = "grasp:target";
  g.attachment = GripperTool{};
  g.affordance = Pose::identity();
  for (int i = 0; i < k0; ++i) {
    g.action_seq.emplace_back(Rotation::identity(), Vec3(0.1 * i, 0, 0.1));
  }
  StageAction p;
  p.task_label = "place:target";
  p.attachment = RigidObject{"target"};
  p.affordance = Pose(Rotation::from_rotvec(Vec3(0, 0, 0.3)), Vec3(0.01, 0, 0));
  for (int i = 0; i < k1; ++i) {
    p.action_seq.emplace_back(Rotation::identity(), Vec3(0, 0.1 * i, 0.05));
  }
  c.stages = {g, p};
  return c;
}

}  // namespace

TEST_CASE("object_motion composes the inverse affordance") {
  StageAction st;
  st.attachment = RigidObject{"x"};
  st.affordance = Pose(Rotation::from_rotvec(Vec3(0, 0, 1.0)), Vec3(0.1, 0.2, 0.0));
  st.action_seq = {Pose(Rotation::from_rotvec(Vec3(0.2, 0, 0)), Vec3(0, 0, 0.3))};
  const auto motion = object_motion(st, Pose());
  REQUIRE(motion.size() == 1);
  // P * affordance == action frame
  CHECK(approx(compose(motion[0], st.affordance), st.action_seq[0], 1e-12));
}

TEST_CASE("tokenize slot counting example") {
  // 2 stages with K = (2, 3), layout sized for max_stages=3, max_k=4:
  // 3 * (1 + 4) = 15 slots; real slots = (1+2) + (1+3) = 7.
  const CoMOKChain chain = two_stage_chain(2, 3);
  const TokenLayout layout = tokenize(chain, 3, 4);
  CHECK(layout.n_slots() == 15);
  CHECK(layout.n_real() == 7);
}

TEST_CASE("gripper-stage affordance slots are real but never predicted") {
  const CoMOKChain chain = two_stage_chain(2, 2);
  const TokenLayout layout = tokenize(chain, 2, 3);
  const auto& slot = layout.slots[0];  // stage 0 affordance
  CHECK(slot.action_index == -1);
  CHECK(slot.real);
  CHECK_FALSE(slot.predicted);
  CHECK(approx(slot.pose, Pose::identity(), 1e-12));
  // Non-gripper affordance slot is predicted.
  const auto& slot2 = layout.slots[1 * (1 + 3) + 0];
  CHECK(slot2.real);
  CHECK(slot2.predicted);
}

TEST_CASE("detokenize inverts tokenize") {
  const CoMOKChain chain = two_stage_chain(2, 3);
  const TokenLayout layout = tokenize(chain, 3, 4);
  const CoMOKChain back = detokenize(layout, chain);
  REQUIRE(back.stages.size() == chain.stages.size());
  for (std::size_t s = 0; s < chain.stages.size(); ++s) {
    CHECK(back.stages[s].task_label == chain.stages[s].task_label);
    CHECK(approx(back.stages[s].affordance, chain.stages[s].affordance, 1e-12));
    REQUIRE(back.stages[s].action_seq.size() == chain.stages[s].action_seq.size());
    for (std::size_t k = 0; k < chain.stages[s].action_seq.size(); ++k) {
      CHECK(approx(back.stages[s].action_seq[k], chain.stages[s].action_seq[k], 1e-12));
    }
  }
}

TEST_CASE("chain json round trip") {
  const CoMOKChain chain = two_stage_chain(2, 3);
  const CoMOKChain back = chain_from_json(chain_to_json(chain));
  REQUIRE(back.stages.size() == 2);
  CHECK(back.stages[1].task_label == "place:target");
  CHECK(attachment_object(back.stages[1].attachment) == "target");
  CHECK(approx(back.stages[1].affordance, chain.stages[1].affordance, 1e-12));
}

TEST_CASE("validate_chain enforces gripper identity affordance and precedence") {
  const Scene scene = simple_scene();
  CoMOKChain chain = two_stage_chain(2, 2);
  CHECK(validate_chain(chain, scene).empty());

  // Non-identity affordance on a gripper stage is a violation.
  CoMOKChain bad = chain;
  bad.stages[0].affordance = Pose(Rotation::identity(), Vec3(0.01, 0, 0));
  CHECK_FALSE(validate_chain(bad, scene).empty());

  // Manipulating an object that was never grasped is a violation.
  CoMOKChain orphan;
  orphan.stages = {chain.stages[1]};
  CHECK_FALSE(validate_chain(orphan, scene).empty());

  // Unknown object id is a violation.
  CoMOKChain ghost = chain;
  ghost.stages[1].attachment = RigidObject{"nonexistent"};
  ghost.stages[1].task_label = "place:nonexistent";
  CHECK_FALSE(validate_chain(ghost, scene).empty());
}

TEST_CASE("end-effector trajectory freezes the grasp transform") {
  const Scene scene = simple_scene();
  const CoMOKChain chain = two_stage_chain(2, 2);
  const auto traj = to_end_effector_traj(chain, scene);
  REQUIRE(traj.size() == 2);
  // Grasp stage frames pass through verbatim.
  for (std::size_t k = 0; k < chain.stages[0].action_seq.size(); ++k) {
    CHECK(approx(traj[0][k], chain.stages[0].action_seq[k], 1e-12));
  }
  // Later stages: ee = object_pose * (O^-1 G) with O at the grasp instant.
  const Pose grasp = chain.stages[0].action_seq.back();
  const Pose obj0 = scene.object("target").pose;
  const Pose h = compose(inverse(obj0), grasp);
  const auto motion = object_motion(chain.stages[1], obj0);
  for (std::size_t k = 0; k < motion.size(); ++k) {
    CHECK(approx(traj[1][k], compose(motion[k], h), 1e-9));
  }
}
