#pragma once

#include <optional>
#include <string>
#include <vector>

#include "comok/denoiser.hpp"
#include "comok/motion.hpp"
#include "comok/oracles.hpp"
#include "comok/scene_gen.hpp"
#include "comok/task_plan.hpp"

namespace comok {

// Per-candidate error to the closest ground-truth chain, matched frame by
// frame over the action sequences and averaged.
struct ActionError {
  double rot = 0.0;    // radians
  double trans = 0.0;  // meters
};
std::vector<ActionError> action_errors(const CandidateSet& candidates, const GroundTruth& gt);

// Fraction of candidates whose final stage passes the per-task oracle.
// `degenerate` is set when the candidate set is empty (ratio defined as 0).
double valid_ratio(const CandidateSet& candidates, const Scene& scene, TaskFamily family,
                   const OracleConfig& cfg, bool* degenerate = nullptr);

// Oracle-backed sampler for pipeline self-tests: cycles GT chains with small
// jitter; a `degrade` fraction is displaced 10 cm to force invalidity.
CandidateSet cheat_sample(const GroundTruth& gt, int n_candidates, double jitter_sigma,
                          double degrade, Rng& rng);

struct EpisodeRecord {
  int scene_index = 0;
  std::uint64_t scene_seed = 0;
  int n_candidates = 0;
  std::vector<bool> candidate_feasible;
  std::vector<bool> candidate_valid;    // full chain_success per candidate
  std::optional<std::size_t> selected;
  bool success = false;
  double err_rot = 0.0;   // selected candidate's error to closest GT
  double err_trans = 0.0;
  std::string failure;    // taxonomy: invalid_plan | invalid_action | infeasible_all |
                          //           replay_collision | oracle_fail | "" on success
};

struct Report {
  std::string family;
  int n_scenes = 0;
  double valid_action_ratio = 0.0;
  double success_rate = 0.0;
  double mean_trans = 0.0, median_trans = 0.0;
  double mean_rot = 0.0, median_rot = 0.0;
  std::vector<std::pair<std::string, int>> failures;  // taxonomy counts, sorted by name
};

struct BenchmarkConfig {
  TaskFamily family = TaskFamily::Place;
  int n_scenes = 10;
  int n_candidates = 32;
  std::uint64_t seed = 0;
  bool cheat = false;
  double cheat_degrade = 0.0;
  double cheat_jitter = 0.0;
  double sample_beta = 0.7;  // Langevin noise multiplier for the learned sampler
  int render_points = 1024;
  SceneGenConfig scene_cfg;
  OracleConfig oracle_cfg;
  MotionConfig motion_cfg;
  // Asserts the selection-soundness invariant per scene (any feasible and
  // valid candidate implies episode success).
  bool assert_soundness = true;
};

struct BenchmarkResult {
  Report report;
  std::vector<EpisodeRecord> episodes;
};

// weights may be null when cfg.cheat is set.
BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const ModelWeights* weights);

// Seeded scene/GT generation rolled into denoiser training samples; the
// chains of each scene are stride-subsampled down to max_chains_per_scene.
std::vector<TrainSample> build_dataset(const ModelWeights& w, TaskFamily family, int n_scenes,
                                       std::uint64_t seed, const SceneGenConfig& scfg,
                                       int render_points, int max_chains_per_scene);

std::string report_to_json(const Report& r);
std::string report_to_csv(const Report& r);
std::string episodes_to_jsonl(const std::vector<EpisodeRecord>& eps);

}  // namespace comok
