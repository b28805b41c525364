#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "comok/action.hpp"
#include "comok/motion.hpp"
#include "comok/rng.hpp"
#include "comok/scene.hpp"
#include "comok/task_plan.hpp"

namespace comok {

struct NoiseSchedule {
  std::vector<double> sigma_rot;    // geometric, strictly decreasing
  std::vector<double> sigma_trans;
  int steps_per_level = 20;
  double step_eps = 0.2;  // alpha_l = step_eps * sigma_l^2 (per block)

  int levels() const { return static_cast<int>(sigma_rot.size()); }
  static NoiseSchedule geometric(int levels, double rot_max, double rot_min, double trans_max,
                                 double trans_min, int steps_per_level = 20,
                                 double step_eps = 0.2);
};

struct DenoiserConfig {
  int d = 64;          // token width
  int G = 16;          // scene tokens per stage
  int B = 2;           // transformer blocks
  int ffn_mult = 2;
  int max_stages = 2;
  int max_k = 3;
  int cloud_points = 256;  // points fed to the encoder (subsampled)
  double trans_scale = 0.5;  // translation feature normalization, meters
};

struct ParamSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  Eigen::Index offset = 0;
  bool trainable = true;
};

struct ModelWeights {
  DenoiserConfig cfg;
  NoiseSchedule schedule;
  std::vector<ParamSpec> manifest;
  Eigen::VectorXd flat;
  std::string version = "comok-denoiser-1";
  // R^6 tangent ordering is rotation-first; recorded in the checkpoint header.

  Eigen::Index size() const { return flat.size(); }
  const ParamSpec& spec(const std::string& name) const;
  Eigen::Map<const Eigen::MatrixXd> param(const std::string& name) const;
  Eigen::Map<Eigen::MatrixXd> param_mut(const std::string& name);
};

ModelWeights init_weights(const DenoiserConfig& cfg, const NoiseSchedule& schedule,
                          std::uint64_t seed);

// Per-stage mean positions and principal axes of the masked cloud points;
// frame slots receive their offsets to the centroids and their rotations
// expressed in the eigenbases as input features.
struct StageCentroids {
  std::vector<Vec3> env;
  std::vector<Vec3> manip;
  std::vector<Mat3> env_axes;
  std::vector<Mat3> manip_axes;
};

// Per-stage scene tokens (G x (d+2)); precomputable because they do not
// depend on the frame slots.
struct SceneTokens {
  std::vector<Eigen::MatrixXd> per_stage;
  StageCentroids centroids;
};

// Cloud subsampling is deterministic: stride over the stored point order.
PointCloud subsample_cloud(const PointCloud& cloud, int n_points);

SceneTokens encode_cloud(const ModelWeights& w, const PointCloud& cloud,
                         const std::vector<StageMasks>& masks);

// Score head output, slots x 6 (rotation-first tangent). Masked (non-real)
// slots get zero rows. stage labels / indices come from the layout.
Eigen::MatrixXd score_forward(const ModelWeights& w, const TokenLayout& layout,
                              const SceneTokens& scene, int level);

struct TrainSample {
  PointCloud cloud;               // already subsampled
  std::vector<StageMasks> masks;  // per stage, over `cloud`
  TokenLayout tokens;             // tokenized GT chain
};

TrainSample make_train_sample(const ModelWeights& w, const PointCloud& cloud,
                              const std::vector<StagePlan>& plans, const CoMOKChain& chain);

// Mean over batch of mean-per-unmasked-slot || s_hat + eps/sigma ||^2.
double dsm_loss(const ModelWeights& w, const std::vector<TrainSample>& batch, Rng& rng);

enum class GradMode { Serial, Parallel };

// Loss plus exact analytic gradient; Parallel distributes batch items over
// OpenMP workers with an index-ordered (deterministic) reduction.
double dsm_loss_grad(const ModelWeights& w, const std::vector<TrainSample>& batch, Rng& rng,
                     Eigen::VectorXd& grad, GradMode mode = GradMode::Serial);

struct TrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double lr = 0.05;
  double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
  std::uint64_t seed = 0;
  GradMode grad_mode = GradMode::Serial;
  std::string loss_csv;  // optional output path
};

struct TrainResult {
  std::vector<double> loss_curve;
};

// Plain gradient descent with cosine learning-rate decay. Throws on NaN loss.
TrainResult train(ModelWeights& w, const std::vector<TrainSample>& dataset,
                  const TrainConfig& cfg);

struct SampleConfig {
  int n_candidates = 32;
  double beta = 1.0;  // Langevin noise multiplier
};

// Annealed Langevin sampling; returns one chain per candidate built on
// `chain_template` (stage labels / attachments from the plan).
CandidateSet sample(const ModelWeights& w, const PointCloud& cloud,
                    const std::vector<StagePlan>& plans, const CoMOKChain& chain_template,
                    const SampleConfig& scfg, Rng& rng);

CoMOKChain chain_template_from_plan(const std::vector<StagePlan>& plans);

void save_checkpoint(const std::string& path, const ModelWeights& w);
ModelWeights load_checkpoint(const std::string& path);

}  // namespace comok
