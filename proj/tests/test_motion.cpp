#include "comok/motion.hpp"

#include "comok/oracles.hpp"
#include "comok/scene_gen.hpp"
#include "doctest.h"

using namespace comok;

namespace {

Scene empty_table_scene() {
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

Pose top_down(double x, double y, double z) {
  return Pose(Rotation::from_rotvec(Vec3(M_PI, 0, 0)), Vec3(x, y, z));
}

void add_wall(Scene& scene, const std::string& id, const Vec3& dims, const Vec3& at) {
  PlacedObject wall;
  wall.model.id = id;
  wall.model.category = Category::Obstacle;
  wall.model.primitives.push_back(Primitive::box(dims));
  wall.pose = Pose(Rotation::identity(), at);
  scene.objects.push_back(std::move(wall));
}

}  // namespace

TEST_CASE("bridge takes the direct path in free space") {
  const Scene scene = empty_table_scene();
  const Pose start = top_down(-0.2, 0.0, 0.2);
  const Pose goal = top_down(0.2, 0.0, 0.2);
  const auto path = bridge(start, goal, scene, std::nullopt, {}, {});
  REQUIRE(path.has_value());
  CHECK(approx(path->front(), start, 1e-12));
  CHECK(approx(path->back(), goal, 1e-12));
  // Direct: z never needs to rise above the endpoints.
  for (const auto& p : *path) CHECK(p.translation.z() <= 0.2 + 1e-9);
}

TEST_CASE("bridge lifts over an obstacle when the direct path is blocked") {
  Scene scene = empty_table_scene();
  add_wall(scene, "obstacle0", Vec3(0.05, 0.6, 0.2), Vec3(0.0, 0.0, 0.1));
  const Pose start = top_down(-0.2, 0.0, 0.15);
  const Pose goal = top_down(0.2, 0.0, 0.15);
  const auto path = bridge(start, goal, scene, std::nullopt, {}, {});
  REQUIRE(path.has_value());
  double zmax = 0.0;
  for (const auto& p : *path) zmax = std::max(zmax, p.translation.z());
  CHECK(zmax > 0.25);  // cleared the wall via the lift waypoint
}

TEST_CASE("bridge fails when the goal leaves the workspace") {
  const Scene scene = empty_table_scene();
  const Pose start = top_down(0.0, 0.0, 0.2);
  const Pose outside = top_down(5.0, 0.0, 0.2);
  CHECK(!bridge(start, outside, scene, std::nullopt, {}, {}).has_value());
}

TEST_CASE("bridge fails when even the lifted path collides") {
  Scene scene = empty_table_scene();
  // Ceiling wall spanning the workspace: no lift can clear it.
  add_wall(scene, "obstacle0", Vec3(1.2, 1.2, 0.05), Vec3(0.0, 0.0, 0.3));
  const Pose start = top_down(-0.2, 0.0, 0.1);
  const Pose goal = top_down(0.2, 0.0, 0.1);
  Scene blocked = scene;
  add_wall(blocked, "obstacle1", Vec3(0.05, 1.2, 0.28), Vec3(0.0, 0.0, 0.14));
  CHECK(!bridge(start, goal, blocked, std::nullopt, {}, {}).has_value());
}

TEST_CASE("select returns the argmin path length with index tie-breaking") {
  Rng rng(61);
  const Scene scene = sample_scene(TaskFamily::Grasp, rng);
  const GroundTruth gt = ground_truth_actions(scene, TaskFamily::Grasp);
  REQUIRE(gt.chains.size() >= 2);

  CandidateSet set;
  set.chains = {gt.chains[0], gt.chains[1], gt.chains[0]};
  const auto pick = select(set, scene, {});
  REQUIRE(pick.has_value());
  REQUIRE(set.reports.size() == 3);
  for (std::size_t i = 0; i < set.reports.size(); ++i) {
    if (!set.reports[i].feasible()) continue;
    CHECK(set.reports[*pick].path_length <= set.reports[i].path_length);
  }
  // Duplicate of the winner later in the list must not displace it.
  if (*pick == 0) CHECK(set.reports[2].path_length == set.reports[0].path_length);

  // An invalid chain is skipped with a diagnostic, not selected.
  CandidateSet bad;
  CoMOKChain broken = gt.chains[0];
  broken.stages[0].action_seq.clear();
  bad.chains = {broken};
  CHECK(!select(bad, scene, {}).has_value());
  REQUIRE(bad.reports.size() == 1);
  CHECK(!bad.reports[0].diagnostics.empty());
}

TEST_CASE("kinematic replay places the object exactly at the commanded pose") {
  Rng rng(62);
  const Scene scene = sample_scene(TaskFamily::Place, rng);
  const GroundTruth gt = ground_truth_actions(scene, TaskFamily::Place);
  REQUIRE(!gt.empty());
  const auto& chain = gt.chains.front();
  const auto exec = execute_kinematic(chain, scene, {});
  CHECK(!exec.replay_collision);
  REQUIRE(exec.trajectory.stage_paths.size() == chain.stages.size());

  const auto& place = chain.stages[1];
  const Pose want = compose(place.action_seq.back(), inverse(place.affordance));
  const Pose got = exec.final_scene.object("target").pose;
  const auto err = geodesic_error(want, got);
  CHECK(err.rot < 1e-9);
  CHECK(err.trans < 1e-9);
}

TEST_CASE("execute_kinematic rejects chains that fail validation") {
  Rng rng(62);
  const Scene scene = sample_scene(TaskFamily::Place, rng);
  CoMOKChain bogus;
  StageAction st;
  st.task_label = "place:target";
  st.attachment = RigidObject{"target"};
  st.action_seq = {Pose::identity()};
  bogus.stages = {st};  // place without a prior grasp
  CHECK_THROWS_AS(execute_kinematic(bogus, scene, {}), std::invalid_argument);
}

TEST_CASE("propagate_rope preserves segment lengths from both rope ends") {
  Rng rng(63);
  const double L = 0.03;
  std::vector<Pose> segs;
  for (int i = 0; i < 10; ++i) {
    segs.emplace_back(Rotation::from_rotvec(Vec3(0, 0, 0.1 * i)), Vec3(i * L, 0.0, 0.01));
  }
  for (int trial = 0; trial < 20; ++trial) {
    const int leader = rng.uniform_int(0, 9);
    const Pose target(Rotation::from_rotvec(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 0)),
                      Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0, 0.2)));
    propagate_rope(segs, leader, target, L);
    CHECK(approx(segs[static_cast<std::size_t>(leader)], target, 1e-12));
    for (int i = 1; i < 10; ++i) {
      const double d = (segs[i].translation - segs[i - 1].translation).norm();
      CHECK(std::abs(d - L) < 1e-9);
    }
  }
  CHECK_THROWS_AS(propagate_rope(segs, 42, Pose::identity(), L), std::out_of_range);
}

TEST_CASE("cable replay keeps rope segment lengths within 1e-6") {
  Rng rng(64);
  const Scene scene = sample_scene(TaskFamily::Cable, rng);
  const GroundTruth gt = ground_truth_actions(scene, TaskFamily::Cable);
  REQUIRE(!gt.empty());
  const auto exec = execute_kinematic(gt.chains.front(), scene, {});
  CHECK(!exec.replay_collision);
  const auto& rope = exec.final_scene.object("rope");
  const double L = rope.model.rope_segment_len;
  REQUIRE(rope.segment_poses.size() >= 2);
  for (std::size_t i = 1; i < rope.segment_poses.size(); ++i) {
    const double d =
        (rope.segment_poses[i].translation - rope.segment_poses[i - 1].translation).norm();
    CHECK(std::abs(d - L) < 1e-6);
  }
}

TEST_CASE("feasibility reports a path length that scales with distance") {
  Rng rng(65);
  const Scene scene = sample_scene(TaskFamily::Grasp, rng);
  const GroundTruth gt = ground_truth_actions(scene, TaskFamily::Grasp);
  REQUIRE(!gt.empty());
  const auto rep = feasible(gt.chains.front(), scene, {});
  CHECK(rep.feasible());
  MotionConfig far_home;
  far_home.home.translation += Vec3(0.2, 0.2, 0.2);
  const auto rep_far = feasible(gt.chains.front(), scene, far_home);
  CHECK(rep_far.path_length > rep.path_length);
}
