// Acceptance suite: one self-contained check per shipped guarantee, each
// printing a single PASS/FAIL line. Run without arguments for the full
// suite, or pass criterion numbers (e.g. `acceptance_tests 3 7`) to run a
// subset. Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "comok/denoiser.hpp"
#include "comok/eval.hpp"
#include "comok/motion.hpp"
#include "comok/oracles.hpp"
#include "comok/scene_gen.hpp"
#include "comok/se3.hpp"
#include "comok/task_plan.hpp"

using namespace comok;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& msg) {
    if (!cond) {
      ok = false;
      detail << "    " << msg << "\n";
    }
  }
};

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

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


// ---------------------------------------------------------------------------
// 1. SE(3) exp/log round trip and composition against the matrix oracle.

bool criterion1() {
  Check c;
  Rng rng(101);
  double worst_rt = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
    if (axis.norm() < 1e-9) axis = Vec3(1, 0, 0);
    axis.normalize();
    const double angle = rng.uniform(0.0, M_PI - 1e-3);
    const Twist t{angle * axis,
                  Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
    const Twist back = logmap(expmap(t));
    const double err =
        std::max((back.omega - t.omega).norm(), (back.v - t.v).norm());
    worst_rt = std::max(worst_rt, err);
  }
  c.expect(worst_rt < 1e-9, "round-trip error " + std::to_string(worst_rt));

  double worst_comp = 0.0;
  for (int i = 0; i < 1000; ++i) {
    auto rand_pose = [&] {
      Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
      axis.normalize();
      return Pose(Rotation::from_rotvec(rng.uniform(0.0, M_PI - 1e-3) * axis),
                  Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
    };
    const Pose a = rand_pose(), b = rand_pose();
    const Mat4 got = compose(a, b).matrix();
    const Mat4 want = a.matrix() * b.matrix();
    worst_comp = std::max(worst_comp, (got - want).cwiseAbs().maxCoeff());
  }
  c.expect(worst_comp < 1e-9, "compose-vs-matrix error " + std::to_string(worst_comp));
  if (!c.ok) std::cout << c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 2. Analytic score-matching gradients against central finite differences.

bool criterion2() {
  Check c;
  DenoiserConfig cfg;
  cfg.d = 8;
  cfg.G = 4;
  cfg.B = 1;
  cfg.cloud_points = 32;
  const auto sched = NoiseSchedule::geometric(2, 1.0, 0.2, 0.2, 0.05, 4, 0.2);
  auto w = init_weights(cfg, sched, 10);

  Rng srng(74);
  const Scene scene = sample_scene(TaskFamily::Place, srng);
  const GroundTruth gt = ground_truth_actions(scene, TaskFamily::Place);
  const PointCloud cloud = render_cloud(scene, 256, srng);
  const auto plans = plan(scene, TaskSpec{TaskFamily::Place, {}, false});
  const TrainSample s = make_train_sample(w, cloud, plans, gt.chains.front());

  Eigen::VectorXd grad(w.size());
  {
    Rng rng(123);
    dsm_loss_grad(w, {s}, rng, grad, GradMode::Serial);
  }
  auto loss_at = [&](ModelWeights& m) {
    Rng rng(123);  // identical noise draw every evaluation
    return dsm_loss(m, {s}, rng);
  };

  Rng pick(11);
  const double h = 1e-5;
  int checked = 0;
  for (int rep = 0; rep < 60; ++rep) {
    const auto& p = w.manifest[static_cast<std::size_t>(
        pick.uniform_int(0, static_cast<int>(w.manifest.size()) - 1))];
    if (!p.trainable) continue;
    const Eigen::Index idx = p.offset + pick.uniform_int(0, p.rows * p.cols - 1);
    ModelWeights wp = w;
    wp.flat[idx] += h;
    const double up = loss_at(wp);
    wp.flat[idx] -= 2 * h;
    const double dn = loss_at(wp);
    const double fd = (up - dn) / (2 * h);
    const double an = grad[idx];
    const double tol = 1e-4 * std::max({1.0, std::abs(fd), std::abs(an)});
    c.expect(std::abs(fd - an) <= tol,
             "param " + p.name + "[" + std::to_string(idx - p.offset) + "]: fd " +
                 std::to_string(fd) + " vs analytic " + std::to_string(an));
    ++checked;
  }
  c.expect(checked >= 30, "too few coordinates checked");
  if (!c.ok) std::cout << c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 3. Bimodal toy: two grasp orientations on one cylinder; 100 samples must
//    cover both modes (>= 20% each) with median translation error <= 1 cm.

bool criterion3() {
  Check c;
  Scene scene = table_only_scene();
  PlacedObject cyl;
  cyl.model.id = "target";
  cyl.model.category = Category::Bottle;
  cyl.model.primitives.push_back(
      Primitive::cylinder(0.025, 0.12, Pose(Rotation::identity(), Vec3(0, 0, 0.12))));
  cyl.pose = Pose(Rotation::identity(), Vec3(0.10, 0.05, 0.0));
  scene.objects.push_back(cyl);

  auto grasp_chain = [&](double yaw) {
    StageAction st;
    st.task_label = "grasp:target";
    st.attachment = GripperTool{};
    st.affordance = Pose::identity();
    const Pose g(Rotation::from_rotvec(Vec3(0, 0, yaw)) * Rotation::from_rotvec(Vec3(M_PI, 0, 0)),
                 Vec3(0.10, 0.05, 0.14));
    const Pose pre = compose(g, Pose(Rotation::identity(), Vec3(0, 0, -0.10)));
    st.action_seq = {pre, g};
    return CoMOKChain{{st}};
  };
  const CoMOKChain mode_hi = grasp_chain(0.0);
  const CoMOKChain mode_lo = grasp_chain(M_PI / 2);
  for (const auto& m : {mode_hi, mode_lo}) {
    c.expect(grasp_valid(scene, m.stages[0].action_seq.back(), "target", {}),
             "toy mode is not a valid grasp");
  }

  DenoiserConfig cfg;
  cfg.d = 32;
  cfg.G = 8;
  cfg.B = 1;
  cfg.max_stages = 1;
  cfg.max_k = 2;
  cfg.cloud_points = 128;
  const auto sched = NoiseSchedule::geometric(12, 1.2, 0.03, 0.35, 0.004, 15, 0.2);
  ModelWeights w = init_weights(cfg, sched, 3);

  Rng rng(31);
  const PointCloud cloud = render_cloud(scene, 512, rng);
  const auto plans = plan(scene, TaskSpec{TaskFamily::Grasp, {}, false});
  std::vector<TrainSample> data = {make_train_sample(w, cloud, plans, mode_hi),
                                   make_train_sample(w, cloud, plans, mode_lo)};

  TrainConfig tc;
  tc.steps = 12000;
  tc.batch_size = 8;
  tc.lr = 0.02;
  tc.seed = 7;
  train(w, data, tc);

  w.schedule.steps_per_level = 30;
  Rng srng(55);
  const auto cands = sample(w, cloud, plans, chain_template_from_plan(plans),
                            SampleConfig{100, 0.7}, srng);
  c.expect(static_cast<int>(cands.chains.size()) == 100, "expected 100 samples");

  int n_hi = 0, n_lo = 0;
  std::vector<double> terrs, rerrs;
  const Pose g_hi = mode_hi.stages[0].action_seq.back();
  const Pose g_lo = mode_lo.stages[0].action_seq.back();
  for (const auto& chain : cands.chains) {
    const Pose& g = chain.stages[0].action_seq.back();
    const double r_hi = g.rotation.angle_to(g_hi.rotation);
    const double r_lo = g.rotation.angle_to(g_lo.rotation);
    const Pose& ref = r_hi <= r_lo ? g_hi : g_lo;
    (r_hi <= r_lo ? n_hi : n_lo)++;
    terrs.push_back((g.translation - ref.translation).norm());
    rerrs.push_back(std::min(r_hi, r_lo));
  }
  std::sort(terrs.begin(), terrs.end());
  std::sort(rerrs.begin(), rerrs.end());
  const double median_t = terrs[terrs.size() / 2];
  const double median_r = rerrs[rerrs.size() / 2];
  c.expect(n_hi >= 20, "first mode covered by only " + std::to_string(n_hi) + "/100");
  c.expect(n_lo >= 20, "second mode covered by only " + std::to_string(n_lo) + "/100");
  c.expect(median_t <= 0.01, "median translation error " + std::to_string(median_t) + " m");
  c.expect(median_r <= 0.1, "median rotation error " + std::to_string(median_r) + " rad");
  if (!c.ok) std::cout << c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 4. Placement oracle boundaries are exact: 1 cm height, 15 deg tilt.

bool criterion4() {
  Check c;
  const Scene scene = table_only_scene();
  ObjectModel ball;
  ball.id = "target";
  ball.category = Category::Box;
  ball.primitives.push_back(
      Primitive::sphere(0.02, Pose(Rotation::identity(), Vec3(0, 0, 0.02))));
  ball.keyframes["bottom_center"] = {Pose::identity()};

  const Pose h_ok(Rotation::identity(), Vec3(0.1, 0.1, 0.009));
  const Pose h_bad(Rotation::identity(), Vec3(0.1, 0.1, 0.011));
  c.expect(placement_valid(scene, h_ok, ball, h_ok, {}), "0.9 cm height rejected");
  c.expect(!placement_valid(scene, h_bad, ball, h_bad, {}), "1.1 cm height accepted");

  const Pose t_ok(Rotation::from_rotvec(Vec3(14.0 * M_PI / 180.0, 0, 0)), Vec3(0.1, 0.1, 0));
  const Pose t_bad(Rotation::from_rotvec(Vec3(16.0 * M_PI / 180.0, 0, 0)), Vec3(0.1, 0.1, 0));
  c.expect(placement_valid(scene, t_ok, ball, t_ok, {}), "14 deg tilt rejected");
  c.expect(!placement_valid(scene, t_bad, ball, t_bad, {}), "16 deg tilt accepted");
  if (!c.ok) std::cout << c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 5. Rack ground truth: hang frames sit at the exact axial offsets from the
//    stick tip, and replaying a GT chain succeeds on 100/100 seeded scenes.

bool criterion5() {
  Check c;
  const double offsets[3] = {-0.03, 0.0, 0.02};
  int replay_ok = 0;
  for (int i = 0; i < 100; ++i) {
    Rng rng(Rng(500).fork(static_cast<std::uint64_t>(i)).seed());
    const Scene scene = sample_scene(TaskFamily::Rack, rng);
    const GroundTruth gt = ground_truth_actions(scene, TaskFamily::Rack);
    if (gt.empty()) {
      c.expect(false, "scene " + std::to_string(i) + ": empty ground truth");
      continue;
    }
    const auto& rack = scene.object("rack");
    const Pose tip = compose(rack.pose, rack.model.keyframe("stick_tip"));
    const Vec3 axis = tip.rotation.matrix().col(2);
    for (const auto& chain : gt.chains) {
      const auto& hang = chain.stages.back();
      if (hang.action_seq.size() != 3) {
        c.expect(false, "scene " + std::to_string(i) + ": hang stage has " +
                            std::to_string(hang.action_seq.size()) + " frames");
        break;
      }
      for (int k = 0; k < 3; ++k) {
        const Vec3 want = tip.translation + offsets[k] * axis;
        if ((hang.action_seq[k].translation - want).norm() > 1e-12) {
          c.expect(false, "scene " + std::to_string(i) + ": hang frame off the axis");
        }
      }
    }
    if (chain_success(scene, gt.chains.front(), {})) ++replay_ok;
  }
  c.expect(replay_ok == 100,
           "ground-truth replay succeeded on " + std::to_string(replay_ok) + "/100 scenes");
  if (!c.ok) std::cout << c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 6. Selection soundness on 200 seeded placement scenes with a half-degraded
//    oracle sampler: any feasible-and-valid candidate implies success, and
//    the success rate is at least the per-candidate validity rate.

bool criterion6() {
  Check c;
  BenchmarkConfig cfg;
  cfg.family = TaskFamily::Place;
  cfg.n_scenes = 200;
  cfg.n_candidates = 32;
  cfg.seed = 600;
  cfg.cheat = true;
  cfg.cheat_degrade = 0.5;
  cfg.cheat_jitter = 0.002;
  cfg.render_points = 256;
  cfg.assert_soundness = true;

  const auto res = run_benchmark(cfg, nullptr);
  c.expect(res.report.n_scenes == 200, "benchmark did not run 200 scenes");
  for (const auto& ep : res.episodes) {
    bool any_good = false;
    for (std::size_t k = 0; k < ep.candidate_valid.size(); ++k) {
      if (ep.candidate_feasible[k] && ep.candidate_valid[k]) any_good = true;
    }
    if (any_good && !ep.success) {
      c.expect(false, "scene " + std::to_string(ep.scene_index) +
                          ": feasible+valid candidate existed but episode failed");
    }
  }
  c.expect(res.report.success_rate >= res.report.valid_action_ratio,
           "success rate " + std::to_string(res.report.success_rate) +
               " below validity ratio " + std::to_string(res.report.valid_action_ratio));
  c.expect(res.report.valid_action_ratio > 0.2 && res.report.valid_action_ratio < 0.8,
           "degraded sampler validity ratio out of expected band: " +
               std::to_string(res.report.valid_action_ratio));
  if (!c.ok) std::cout << c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 7. End-to-end learned placement: train on seeded scenes, evaluate on 100
//    held-out scenes with 32 candidates each, success rate >= 0.7.

bool criterion7() {
  Check c;
  DenoiserConfig cfg;
  cfg.d = 64;
  cfg.G = 8;
  cfg.B = 1;
  cfg.cloud_points = 128;
  const auto sched = NoiseSchedule::geometric(12, 1.2, 0.03, 0.35, 0.004, 15, 0.2);
  ModelWeights w = init_weights(cfg, sched, 0);

  SceneGenConfig scfg;
  const auto data = build_dataset(w, TaskFamily::Place, 200, 0, scfg, 512, 3);
  c.expect(!data.empty(), "training dataset is empty");

  TrainConfig tc;
  tc.steps = 50000;
  tc.batch_size = 8;
  tc.lr = 0.015;
  tc.seed = 1;
  tc.grad_mode = GradMode::Parallel;
  const auto tr = train(w, data, tc);
  std::cout << "    final training loss " << tr.loss_curve.back() << "\n";

  w.schedule.steps_per_level = 30;  // extra refinement at sampling time
  BenchmarkConfig bc;
  bc.family = TaskFamily::Place;
  bc.n_scenes = 100;
  bc.n_candidates = 32;
  bc.seed = 90001;  // disjoint from the training-scene seeds
  bc.sample_beta = 0.7;
  bc.render_points = 512;
  const auto res = run_benchmark(bc, &w);
  std::cout << "    success rate " << res.report.success_rate << ", validity "
            << res.report.valid_action_ratio << ", median trans err "
            << res.report.median_trans << " m\n";
  c.expect(res.report.success_rate >= 0.7,
           "success rate " + std::to_string(res.report.success_rate) + " below 0.7");
  if (!c.ok) std::cout << c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 8. Determinism: data generation, training, and evaluation all reproduce
//    byte-identical artifacts when rerun with the same seed.

bool criterion8() {
  Check c;
  // Data generation.
  std::string scene_a, gt_a, cloud_a;
  for (int rep = 0; rep < 2; ++rep) {
    Rng rng(Rng(800).fork(3).seed());
    const Scene scene = sample_scene(TaskFamily::Place, rng);
    const GroundTruth gt = ground_truth_actions(scene, TaskFamily::Place);
    const PointCloud cloud = render_cloud(scene, 512, rng);
    const auto tmp = std::filesystem::temp_directory_path() / "comok_accept_cloud.bin";
    write_cloud(tmp.string(), cloud);
    const std::string cloud_bytes = read_file(tmp);
    std::filesystem::remove(tmp);
    if (rep == 0) {
      scene_a = scene_to_json(scene);
      gt_a = ground_truth_to_json(gt);
      cloud_a = cloud_bytes;
    } else {
      c.expect(scene_to_json(scene) == scene_a, "scene JSON differs across reruns");
      c.expect(ground_truth_to_json(gt) == gt_a, "ground-truth JSON differs across reruns");
      c.expect(cloud_bytes == cloud_a, "binary cloud differs across reruns");
    }
  }

  // Training.
  std::string ckpt_a;
  for (int rep = 0; rep < 2; ++rep) {
    DenoiserConfig cfg;
    cfg.d = 16;
    cfg.G = 4;
    cfg.B = 1;
    cfg.cloud_points = 64;
    ModelWeights w = init_weights(cfg, NoiseSchedule::geometric(3, 1.0, 0.1, 0.2, 0.02, 4, 0.2),
                                  5);
    SceneGenConfig scfg;
    const auto data = build_dataset(w, TaskFamily::Place, 2, 42, scfg, 256, 2);
    TrainConfig tc;
    tc.steps = 40;
    tc.batch_size = 2;
    tc.lr = 0.005;
    tc.seed = 9;
    tc.grad_mode = GradMode::Parallel;
    train(w, data, tc);
    const auto tmp = std::filesystem::temp_directory_path() /
                     ("comok_accept_ckpt_" + std::to_string(rep) + ".bin");
    save_checkpoint(tmp.string(), w);
    const std::string bytes = read_file(tmp);
    std::filesystem::remove(tmp);
    if (rep == 0) {
      ckpt_a = bytes;
    } else {
      c.expect(bytes == ckpt_a, "checkpoint bytes differ across training reruns");
    }
  }

  // Evaluation.
  std::string report_a, episodes_a;
  for (int rep = 0; rep < 2; ++rep) {
    BenchmarkConfig bc;
    bc.family = TaskFamily::Grasp;
    bc.n_scenes = 5;
    bc.n_candidates = 8;
    bc.seed = 81;
    bc.cheat = true;
    bc.cheat_degrade = 0.25;
    bc.cheat_jitter = 0.002;
    bc.render_points = 256;
    const auto res = run_benchmark(bc, nullptr);
    const std::string rj = report_to_json(res.report);
    const std::string ej = episodes_to_jsonl(res.episodes);
    if (rep == 0) {
      report_a = rj;
      episodes_a = ej;
    } else {
      c.expect(rj == report_a, "eval report differs across reruns");
      c.expect(ej == episodes_a, "episode log differs across reruns");
    }
  }
  if (!c.ok) std::cout << c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 9. Deformable replay: rope segment lengths survive kinematic execution
//    within 1e-6, and cable ground truth replays cleanly on 100/100 scenes.

bool criterion9() {
  Check c;
  int ok = 0;
  for (int i = 0; i < 100; ++i) {
    Rng rng(Rng(900).fork(static_cast<std::uint64_t>(i)).seed());
    const Scene scene = sample_scene(TaskFamily::Cable, rng);
    const GroundTruth gt = ground_truth_actions(scene, TaskFamily::Cable);
    if (gt.empty()) {
      c.expect(false, "scene " + std::to_string(i) + ": empty ground truth");
      continue;
    }
    const auto& chain = gt.chains.front();
    const auto exec = execute_kinematic(chain, scene, {});
    const auto& rope = exec.final_scene.object("rope");
    const double L = rope.model.rope_segment_len;
    bool lengths_ok = rope.segment_poses.size() >= 2;
    for (std::size_t k = 1; k < rope.segment_poses.size(); ++k) {
      const double d =
          (rope.segment_poses[k].translation - rope.segment_poses[k - 1].translation).norm();
      if (std::abs(d - L) > 1e-6) lengths_ok = false;
    }
    if (!lengths_ok) {
      c.expect(false, "scene " + std::to_string(i) + ": segment lengths drifted");
      continue;
    }
    if (exec.replay_collision || !executed_chain_valid(scene, chain, exec.final_scene, {})) {
      c.expect(false, "scene " + std::to_string(i) + ": ground-truth replay failed");
      continue;
    }
    ++ok;
  }
  c.expect(ok == 100, "cable replay clean on " + std::to_string(ok) + "/100 scenes");
  if (!c.ok) std::cout << c.detail.str();
  return c.ok;
}

struct Criterion {
  int id;
  const char* desc;
  bool (*fn)();
};

const Criterion kCriteria[] = {
    {1, "SE(3) exp/log round trip and composition match the matrix oracle", criterion1},
    {2, "analytic denoising-score gradients match finite differences", criterion2},
    {3, "bimodal toy task: both grasp modes covered, median error <= 1 cm", criterion3},
    {4, "placement oracle boundaries exact at 1 cm and 15 degrees", criterion4},
    {5, "rack ground truth exact on the stick axis; replay 100/100", criterion5},
    {6, "candidate selection sound on 200 half-degraded placement scenes", criterion6},
    {7, "learned placement succeeds on >= 70% of 100 held-out scenes", criterion7},
    {8, "gen-data, train, and eval are byte-identical across reruns", criterion8},
    {9, "rope segment lengths preserved through replay; cable GT 100/100", criterion9},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& cr : kCriteria) {
    if (!wanted.empty() && !wanted.count(cr.id)) continue;
    const double t0 = now_s();
    const bool ok = cr.fn();
    const double dt = now_s() - t0;
    std::printf("%s %d: %s (%.1fs)\n", ok ? "PASS" : "FAIL", cr.id, cr.desc, dt);
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
