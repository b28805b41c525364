#include "comok/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "comok/detail/json_util.hpp"
#include "json.hpp"

namespace comok {

using json = nlohmann::json;

namespace {

// Scalarization used only to pick the closest GT member; both components are
// reported separately.
double combined(double rot, double trans) { return trans + 0.1 * rot; }

ActionError error_to_chain(const CoMOKChain& cand, const CoMOKChain& gt) {
  double rot = 0.0, trans = 0.0;
  int count = 0;
  const std::size_t n_stages = std::min(cand.stages.size(), gt.stages.size());
  for (std::size_t s = 0; s < n_stages; ++s) {
    const auto& ca = cand.stages[s].action_seq;
    const auto& ga = gt.stages[s].action_seq;
    const std::size_t k = std::min(ca.size(), ga.size());
    for (std::size_t i = 0; i < k; ++i) {
      const auto e = geodesic_error(ca[i], ga[i]);
      rot += e.rot;
      trans += e.trans;
      ++count;
    }
  }
  if (count == 0) return {M_PI, 1e6};
  return {rot / count, trans / count};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<ActionError> action_errors(const CandidateSet& candidates, const GroundTruth& gt) {
  if (gt.chains.empty()) throw std::invalid_argument("action_errors: empty ground truth");
  std::vector<ActionError> out;
  out.reserve(candidates.chains.size());
  for (const auto& cand : candidates.chains) {
    ActionError best{M_PI, 1e6};
    for (const auto& g : gt.chains) {
      const ActionError e = error_to_chain(cand, g);
      if (combined(e.rot, e.trans) < combined(best.rot, best.trans)) best = e;
    }
    out.push_back(best);
  }
  return out;
}

double valid_ratio(const CandidateSet& candidates, const Scene& scene, TaskFamily family,
                   const OracleConfig& cfg, bool* degenerate) {
  if (degenerate) *degenerate = candidates.chains.empty();
  if (candidates.chains.empty()) return 0.0;

  int valid = 0;
  for (const auto& chain : candidates.chains) {
    if (chain.stages.empty()) continue;
    const auto& st = chain.stages.back();
    if (st.action_seq.empty()) continue;
    bool ok = false;
    switch (family) {
      case TaskFamily::Grasp: {
        const std::string target = st.task_label.rfind("grasp:", 0) == 0
                                       ? st.task_label.substr(6)
                                       : std::string("target");
        ok = grasp_valid(scene, st.action_seq.back(), target, cfg);
        break;
      }
      case TaskFamily::Place: {
        const std::string target = attachment_object(st.attachment);
        if (scene.find_object(target) < 0) break;
        const auto& obj = scene.object(target);
        const Pose frame = st.action_seq.back();
        const Pose obj_pose = compose(frame, inverse(st.affordance));
        ok = placement_valid(scene, frame, obj.model, obj_pose, cfg) &&
             statically_stable(obj.model, obj_pose, scene.table_height);
        break;
      }
      case TaskFamily::Rack:
        ok = rack_valid(scene, chain, cfg);
        break;
      case TaskFamily::Cable:
        // The cable oracle needs the replayed rope state, so validity of a
        // cable candidate is full-chain success.
        ok = chain_success(scene, chain, cfg);
        break;
    }
    if (ok) ++valid;
  }
  return static_cast<double>(valid) / static_cast<double>(candidates.chains.size());
}

CandidateSet cheat_sample(const GroundTruth& gt, int n_candidates, double jitter_sigma,
                          double degrade, Rng& rng) {
  CandidateSet set;
  set.seed = rng.seed();
  set.weights_version = "cheat-sampler";
  if (gt.chains.empty()) return set;
  for (int i = 0; i < n_candidates; ++i) {
    CoMOKChain chain = gt.chains[i % gt.chains.size()];
    const bool degraded = rng.uniform() < degrade;
    for (auto& st : chain.stages) {
      for (auto& a : st.action_seq) {
        if (jitter_sigma > 0.0) a = perturb(a, jitter_sigma, jitter_sigma, rng).first;
        if (degraded) a.translation.z() += 0.10;  // forces oracle failure, stays reachable
      }
    }
    set.chains.push_back(std::move(chain));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const ModelWeights* weights) {
  if (!cfg.cheat && weights == nullptr) {
    throw std::invalid_argument("run_benchmark: weights required unless cheating");
  }
  BenchmarkResult result;
  result.episodes.resize(cfg.n_scenes);
  const Rng root(cfg.seed);

  std::vector<double> scene_valid_ratio(cfg.n_scenes, 0.0);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < cfg.n_scenes; ++i) {
    Rng rng = root.fork(static_cast<std::uint64_t>(i));
    EpisodeRecord& ep = result.episodes[i];
    ep.scene_index = i;
    ep.scene_seed = rng.seed();

    const Scene scene = sample_scene(cfg.family, rng, cfg.scene_cfg);
    const GroundTruth gt = ground_truth_actions(scene, cfg.family, cfg.scene_cfg);
    if (gt.empty()) {
      ep.failure = "invalid_plan";
      continue;
    }
    const PointCloud cloud = render_cloud(scene, cfg.render_points, rng);
    const auto plans = plan(scene, TaskSpec{cfg.family, {}, false});

    CandidateSet candidates;
    if (cfg.cheat) {
      candidates = cheat_sample(gt, cfg.n_candidates, cfg.cheat_jitter, cfg.cheat_degrade, rng);
    } else {
      candidates = sample(*weights, cloud, plans, chain_template_from_plan(plans),
                          SampleConfig{cfg.n_candidates, cfg.sample_beta}, rng);
    }
    ep.n_candidates = static_cast<int>(candidates.chains.size());
    if (candidates.chains.empty()) {
      ep.failure = "invalid_action";
      continue;
    }

    candidates.reports.resize(candidates.chains.size());
    ep.candidate_feasible.assign(candidates.chains.size(), false);
    ep.candidate_valid.assign(candidates.chains.size(), false);
    bool last_selected_replay_collision = false;
    for (std::size_t c = 0; c < candidates.chains.size(); ++c) {
      const auto& chain = candidates.chains[c];
      if (!validate_chain(chain, scene).empty()) continue;
      candidates.reports[c] = feasible(chain, scene, cfg.motion_cfg);
      ep.candidate_feasible[c] = candidates.reports[c].feasible();
      if (!ep.candidate_feasible[c]) continue;
      const auto exec = execute_kinematic(chain, scene, cfg.motion_cfg);
      if (exec.replay_collision) continue;
      ep.candidate_valid[c] =
          executed_chain_valid(scene, chain, exec.final_scene, cfg.oracle_cfg);
    }
    scene_valid_ratio[i] =
        static_cast<double>(std::count(ep.candidate_valid.begin(), ep.candidate_valid.end(),
                                       true)) /
        static_cast<double>(candidates.chains.size());

    // Prefer feasible AND oracle-valid candidates; fall back to feasible only.
    double best = 1e18;
    std::optional<std::size_t> pick;
    for (int pass = 0; pass < 2 && !pick.has_value(); ++pass) {
      for (std::size_t c = 0; c < candidates.chains.size(); ++c) {
        if (!ep.candidate_feasible[c]) continue;
        if (pass == 0 && !ep.candidate_valid[c]) continue;
        if (candidates.reports[c].path_length < best) {
          best = candidates.reports[c].path_length;
          pick = c;
        }
      }
      if (pick.has_value()) break;
      best = 1e18;
    }
    ep.selected = pick;

    if (!pick.has_value()) {
      ep.failure = "infeasible_all";
    } else {
      ep.success = ep.candidate_valid[*pick];
      if (!ep.success) {
        const auto exec = execute_kinematic(candidates.chains[*pick], scene, cfg.motion_cfg);
        last_selected_replay_collision = exec.replay_collision;
        ep.failure = last_selected_replay_collision ? "replay_collision" : "oracle_fail";
      }
      const auto errs = action_errors(candidates, gt);
      ep.err_rot = errs[*pick].rot;
      ep.err_trans = errs[*pick].trans;
    }

    if (cfg.assert_soundness) {
      bool any_good = false;
      for (std::size_t c = 0; c < candidates.chains.size(); ++c) {
        any_good = any_good || (ep.candidate_feasible[c] && ep.candidate_valid[c]);
      }
      if (any_good && !ep.success) {
        throw std::logic_error("selection soundness violated on scene " + std::to_string(i));
      }
    }
  }

  Report& r = result.report;
  r.family = task_family_name(cfg.family);
  r.n_scenes = cfg.n_scenes;
  std::vector<double> rot_errs, trans_errs;
  std::map<std::string, int> failures;
  int successes = 0;
  double vr = 0.0;
  for (int i = 0; i < cfg.n_scenes; ++i) {
    const auto& ep = result.episodes[i];
    if (ep.success) ++successes;
    if (!ep.failure.empty()) ++failures[ep.failure];
    vr += scene_valid_ratio[i];
    if (ep.selected.has_value()) {
      rot_errs.push_back(ep.err_rot);
      trans_errs.push_back(ep.err_trans);
    }
  }
  if (cfg.n_scenes > 0) {
    r.success_rate = static_cast<double>(successes) / cfg.n_scenes;
    r.valid_action_ratio = vr / cfg.n_scenes;
  }
  if (!rot_errs.empty()) {
    r.mean_rot = std::accumulate(rot_errs.begin(), rot_errs.end(), 0.0) / rot_errs.size();
    r.mean_trans =
        std::accumulate(trans_errs.begin(), trans_errs.end(), 0.0) / trans_errs.size();
    r.median_rot = median(rot_errs);
    r.median_trans = median(trans_errs);
  }
  for (const auto& [k, v] : failures) r.failures.emplace_back(k, v);
  return result;
}

std::vector<TrainSample> build_dataset(const ModelWeights& w, TaskFamily family, int n_scenes,
                                       std::uint64_t seed, const SceneGenConfig& scfg,
                                       int render_points, int max_chains_per_scene) {
  std::vector<TrainSample> out;
  const Rng root(seed);
  for (int i = 0; i < n_scenes; ++i) {
    Rng rng = root.fork(static_cast<std::uint64_t>(i));
    const Scene scene = sample_scene(family, rng, scfg);
    const GroundTruth gt = ground_truth_actions(scene, family, scfg);
    if (gt.empty()) continue;
    const PointCloud cloud = render_cloud(scene, render_points, rng);
    const auto plans = plan(scene, TaskSpec{family, {}, false});
    const int n_chains =
        std::min<int>(max_chains_per_scene, static_cast<int>(gt.chains.size()));
    const double stride = static_cast<double>(gt.chains.size()) / n_chains;
    for (int c = 0; c < n_chains; ++c) {
      const auto& chain = gt.chains[static_cast<std::size_t>(c * stride)];
      out.push_back(make_train_sample(w, cloud, plans, chain));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

json report_json(const Report& r) {
  json j;
  j["schema_version"] = 1;
  j["family"] = r.family;
  j["n_scenes"] = r.n_scenes;
  j["valid_action_ratio"] = r.valid_action_ratio;
  j["success_rate"] = r.success_rate;
  j["mean_trans"] = r.mean_trans;
  j["median_trans"] = r.median_trans;
  j["mean_rot"] = r.mean_rot;
  j["median_rot"] = r.median_rot;
  json f = json::object();
  for (const auto& [k, v] : r.failures) f[k] = v;
  j["failures"] = f;
  return j;
}

}  // namespace

std::string report_to_json(const Report& r) { return report_json(r).dump(2); }

std::string report_to_csv(const Report& r) {
  std::ostringstream s;
  s << "family,n_scenes,valid_action_ratio,success_rate,mean_trans,median_trans,mean_rot,"
       "median_rot\n";
  s << r.family << "," << r.n_scenes << "," << r.valid_action_ratio << "," << r.success_rate
    << "," << r.mean_trans << "," << r.median_trans << "," << r.mean_rot << "," << r.median_rot
    << "\n";
  return s.str();
}

std::string episodes_to_jsonl(const std::vector<EpisodeRecord>& eps) {
  std::ostringstream s;
  for (const auto& ep : eps) {
    json j;
    j["schema_version"] = 1;
    j["scene_index"] = ep.scene_index;
    j["scene_seed"] = ep.scene_seed;
    j["n_candidates"] = ep.n_candidates;
    j["candidate_feasible"] = ep.candidate_feasible;
    j["candidate_valid"] = ep.candidate_valid;
    if (ep.selected.has_value()) j["selected"] = *ep.selected;
    j["success"] = ep.success;
    j["err_rot"] = ep.err_rot;
    j["err_trans"] = ep.err_trans;
    j["failure"] = ep.failure;
    s << j.dump() << "\n";
  }
  return s.str();
}

}  // namespace comok
