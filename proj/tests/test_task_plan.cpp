#include "comok/task_plan.hpp"

#include <stdexcept>

#include "doctest.h"

using namespace comok;

TEST_CASE("place plan is grasp then place with expected wiring") {
  Rng rng(41);
  const Scene scene = sample_scene(TaskFamily::Place, rng);
  const auto plans = plan(scene, TaskSpec{TaskFamily::Place, {}, false});
  REQUIRE(plans.size() == 2);

  CHECK(plans[0].stage_label == "grasp:target");
  CHECK(attachment_is_gripper(plans[0].manipulated));
  CHECK(plans[0].env_ids == std::set<std::string>{"target"});
  CHECK(plans[0].max_k == 2);

  CHECK(plans[1].stage_label == "place:target");
  CHECK(attachment_object(plans[1].manipulated) == "target");
  CHECK(plans[1].env_ids == std::set<std::string>{"table"});
  CHECK(plans[1].max_k == 2);
}

TEST_CASE("already_grasped drops the leading grasp stage") {
  Rng rng(41);
  const Scene scene = sample_scene(TaskFamily::Place, rng);
  const auto plans = plan(scene, TaskSpec{TaskFamily::Place, {}, true});
  REQUIRE(plans.size() == 1);
  CHECK(plans[0].stage_label == "place:target");
}

TEST_CASE("rack and cable plans carry the right attachments") {
  Rng rng(42);
  const Scene rack_scene = sample_scene(TaskFamily::Rack, rng);
  const auto rack_plans = plan(rack_scene, TaskSpec{TaskFamily::Rack, {}, false});
  REQUIRE(rack_plans.size() == 2);
  CHECK(rack_plans[1].stage_label == "hang:mug");
  CHECK(rack_plans[1].max_k == 3);
  CHECK(attachment_object(rack_plans[1].manipulated) == "mug");

  Rng rng2(43);
  const Scene cable_scene = sample_scene(TaskFamily::Cable, rng2);
  const auto cable_plans = plan(cable_scene, TaskSpec{TaskFamily::Cable, {}, false});
  REQUIRE(cable_plans.size() == 2);
  CHECK(cable_plans[1].stage_label == "insert:rope");
  const auto* patch = std::get_if<LocalPatch>(&cable_plans[1].manipulated);
  REQUIRE(patch != nullptr);
  CHECK(patch->object_id == "rope");
  CHECK(patch->patch_id == -1);  // bound later by the sampler
}

TEST_CASE("plan throws when a referenced object is missing") {
  Rng rng(41);
  const Scene scene = sample_scene(TaskFamily::Place, rng);
  CHECK_THROWS_AS(plan(scene, TaskSpec{TaskFamily::Place, {"no_such_object"}, false}),
                  std::invalid_argument);
  CHECK_THROWS_AS(plan(scene, TaskSpec{TaskFamily::Rack, {}, false}), std::invalid_argument);
}

TEST_CASE("attention masks flag exactly the labelled points") {
  Rng rng(44);
  const Scene scene = sample_scene(TaskFamily::Place, rng);
  const PointCloud cloud = render_cloud(scene, 512, rng);
  const auto plans = plan(scene, TaskSpec{TaskFamily::Place, {}, false});
  const auto masks = attention_masks(plans, cloud);
  REQUIRE(masks.size() == plans.size());

  for (std::size_t s = 0; s < plans.size(); ++s) {
    REQUIRE(masks[s].manipulated.size() == cloud.size());
    REQUIRE(masks[s].env.size() == cloud.size());
    const std::string manip = attachment_object(plans[s].manipulated);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const bool want_manip = !manip.empty() && cloud.object_id[i] == manip;
      const bool want_env = plans[s].env_ids.count(cloud.object_id[i]) > 0;
      CHECK(masks[s].manipulated[i] == want_manip);
      CHECK(masks[s].env[i] == want_env);
    }
  }
  // The grasp stage has no manipulated object but points at the target.
  CHECK(std::count(masks[0].manipulated.begin(), masks[0].manipulated.end(), true) == 0);
  CHECK(std::count(masks[0].env.begin(), masks[0].env.end(), true) > 0);
}

TEST_CASE("a spatial env box overrides object-id env masks") {
  Rng rng(44);
  const Scene scene = sample_scene(TaskFamily::Place, rng);
  const PointCloud cloud = render_cloud(scene, 256, rng);
  StagePlan p;
  p.stage_label = "place:target";
  p.manipulated = RigidObject{"target"};
  p.env_ids = {"table"};
  p.env_box = RegionBox{Vec3(-0.1, -0.1, -0.1), Vec3(0.1, 0.1, 0.3)};
  const auto masks = attention_masks({p}, cloud);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(masks[0].env[i] == p.env_box->contains(cloud.points[i]));
  }
}

TEST_CASE("stage label vocabulary is stable and patch labels collapse") {
  const auto& vocab = stage_label_vocabulary();
  REQUIRE(vocab.size() == 6);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    CHECK(stage_label_index(vocab[i]) == static_cast<int>(i));
  }
  CHECK(stage_label_index("grasp:rope:5") == stage_label_index("grasp:rope"));
  CHECK(stage_label_index("insert:rope:0") == stage_label_index("insert:rope"));
  CHECK(stage_label_index("made:up") == -1);
}
