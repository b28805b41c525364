#include "comok/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "comok/detail/autograd.hpp"
#include "comok/detail/json_util.hpp"
#include "json.hpp"

namespace comok {

using ad::Tape;
using Mat = Eigen::MatrixXd;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Schedule / weights
// ---------------------------------------------------------------------------

NoiseSchedule NoiseSchedule::geometric(int levels, double rot_max, double rot_min,
                                       double trans_max, double trans_min, int steps_per_level,
                                       double step_eps) {
  NoiseSchedule s;
  s.steps_per_level = steps_per_level;
  s.step_eps = step_eps;
  for (int l = 0; l < levels; ++l) {
    const double f = levels == 1 ? 0.0 : static_cast<double>(l) / (levels - 1);
    s.sigma_rot.push_back(rot_max * std::pow(rot_min / rot_max, f));
    s.sigma_trans.push_back(trans_max * std::pow(trans_min / trans_max, f));
  }
  return s;
}

const ParamSpec& ModelWeights::spec(const std::string& name) const {
  for (const auto& p : manifest) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no such parameter: " + name);
}

Eigen::Map<const Mat> ModelWeights::param(const std::string& name) const {
  const auto& p = spec(name);
  return Eigen::Map<const Mat>(flat.data() + p.offset, p.rows, p.cols);
}

Eigen::Map<Mat> ModelWeights::param_mut(const std::string& name) {
  const auto& p = spec(name);
  return Eigen::Map<Mat>(flat.data() + p.offset, p.rows, p.cols);
}

namespace {

// 9 rotation-matrix entries + 3 scaled translation + 3 offset to the stage's
// env-mask centroid + 3 offset to its manipulated-mask centroid + 9 entries
// of the rotation in the env eigenbasis + 9 in the manip eigenbasis. The
// offsets make "move toward the stage's objects" nearly linear in the
// inputs; the eigenbasis rotations do the same for "align with the stage's
// objects" (a grasp yaw becomes a constant in the target's principal frame).
constexpr int kFrameFeat = 36;
constexpr int kPointFeat = 5;  // scaled world xyz + manip bit + env bit
constexpr double kMaskNegInf = -1e9;

std::vector<ParamSpec> build_manifest(const DenoiserConfig& c, int levels, int vocab) {
  std::vector<ParamSpec> m;
  Eigen::Index at = 0;
  auto add = [&](const std::string& name, int rows, int cols, bool trainable = true) {
    m.push_back({name, rows, cols, at, trainable});
    at += static_cast<Eigen::Index>(rows) * cols;
  };
  const int d = c.d;
  add("pt_w1", kPointFeat, d);
  add("pt_b1", 1, d);
  add("pt_w2", d, d);
  add("pt_b2", 1, d);
  add("pool_q", c.G, d);
  add("frame_w", kFrameFeat, d);
  add("frame_b", 1, d);
  add("pos_emb", c.max_stages * (1 + c.max_k), d);
  add("label_emb", vocab, d, /*trainable=*/false);  // frozen stand-in for h_task
  add("level_emb", levels, d);
  for (int b = 0; b < c.B; ++b) {
    const std::string p = "blk" + std::to_string(b) + "_";
    add(p + "sa_wq", d, d);
    add(p + "sa_wk", d, d);
    add(p + "sa_wv", d, d);
    add(p + "sa_wo", d, d);
    add(p + "ca_wq", d, d);
    add(p + "ca_wk", d + 2, d);
    add(p + "ca_wv", d + 2, d);
    add(p + "ca_wo", d, d);
    add(p + "ff_w1", d, c.ffn_mult * d);
    add(p + "ff_b1", 1, c.ffn_mult * d);
    add(p + "ff_w2", c.ffn_mult * d, d);
    add(p + "ff_b2", 1, d);
  }
  add("head_w", d, 6);
  add("head_b", 1, 6);
  return m;
}

}  // namespace

ModelWeights init_weights(const DenoiserConfig& cfg, const NoiseSchedule& schedule,
                          std::uint64_t seed) {
  ModelWeights w;
  w.cfg = cfg;
  w.schedule = schedule;
  const int vocab = static_cast<int>(stage_label_vocabulary().size());
  w.manifest = build_manifest(cfg, schedule.levels(), vocab);
  const auto& last = w.manifest.back();
  w.flat.resize(last.offset + static_cast<Eigen::Index>(last.rows) * last.cols);

  Rng rng(seed);
  for (const auto& p : w.manifest) {
    double s;
    if (p.name == "pos_emb" || p.name == "level_emb") {
      s = 0.1;
    } else if (p.name == "label_emb") {
      s = 1.0;
    } else if (p.name.size() > 2 && p.name.substr(p.name.size() - 2) == "_b") {
      s = 0.0;
    } else {
      s = 1.0 / std::sqrt(static_cast<double>(p.rows));  // fan-in scaling
    }
    auto seg = w.flat.segment(p.offset, static_cast<Eigen::Index>(p.rows) * p.cols);
    for (Eigen::Index i = 0; i < seg.size(); ++i) seg[i] = s == 0.0 ? 0.0 : rng.gaussian(0.0, s);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Forward graph
// ---------------------------------------------------------------------------

namespace {

// Lazily materializes parameters as tape leaves so gradients can be gathered.
struct ParamVars {
  Tape* tape = nullptr;
  const ModelWeights* w = nullptr;
  std::map<std::string, int> vars;

  int operator()(const std::string& name) {
    auto it = vars.find(name);
    if (it != vars.end()) return it->second;
    const int v = tape->leaf(Mat(w->param(name)));
    vars.emplace(name, v);
    return v;
  }
};

Eigen::RowVectorXd frame_features(const Pose& p, double trans_scale, const Vec3& env_centroid,
                                  const Vec3& manip_centroid, const Mat3& env_axes,
                                  const Mat3& manip_axes) {
  Eigen::RowVectorXd f(kFrameFeat);
  const Mat3 r = p.rotation.matrix();
  int at = 0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) f[at++] = r(i, j);
  }
  for (int i = 0; i < 3; ++i) f[at++] = p.translation[i] / trans_scale;
  for (int i = 0; i < 3; ++i) f[at++] = (p.translation[i] - env_centroid[i]) / trans_scale;
  for (int i = 0; i < 3; ++i) f[at++] = (p.translation[i] - manip_centroid[i]) / trans_scale;
  const Mat3 re = env_axes.transpose() * r;
  const Mat3 rm = manip_axes.transpose() * r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) f[at++] = re(i, j);
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) f[at++] = rm(i, j);
  }
  return f;
}

// Right-handed orthonormal frame from the covariance of a point subset:
// eigenvectors in ascending-eigenvalue order, each flipped so its largest
// component is positive, third column rebuilt by cross product. Any
// deterministic convention works; the net only needs a repeatable basis.
Mat3 principal_axes(const std::vector<Vec3>& pts, const std::vector<bool>* mask,
                    const Vec3& mean) {
  Mat3 cov = Mat3::Zero();
  int n = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const Vec3 d = pts[i] - mean;
    cov += d * d.transpose();
    ++n;
  }
  if (n < 3) return Mat3::Identity();
  cov /= static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  Mat3 axes = es.eigenvectors();
  for (int c = 0; c < 2; ++c) {
    int arg = 0;
    axes.col(c).cwiseAbs().maxCoeff(&arg);
    if (axes(arg, c) < 0) axes.col(c) = -axes.col(c);
  }
  axes.col(2) = axes.col(0).cross(axes.col(1));
  return axes;
}

// Per-stage mean positions and principal axes of the masked cloud points;
// the whole-cloud statistics stand in when a mask selects nothing.
StageCentroids stage_centroids(const PointCloud& cloud, const std::vector<StageMasks>& masks) {
  StageCentroids out;
  Vec3 all = Vec3::Zero();
  for (const auto& p : cloud.points) all += p;
  if (!cloud.points.empty()) all /= static_cast<double>(cloud.size());
  const Mat3 all_axes = principal_axes(cloud.points, nullptr, all);
  for (const auto& m : masks) {
    Vec3 env = Vec3::Zero(), manip = Vec3::Zero();
    int ne = 0, nm = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (m.env[i]) {
        env += cloud.points[i];
        ++ne;
      }
      if (m.manipulated[i]) {
        manip += cloud.points[i];
        ++nm;
      }
    }
    const Vec3 env_c = ne > 0 ? Vec3(env / ne) : all;
    const Vec3 manip_c = nm > 0 ? Vec3(manip / nm) : all;
    out.env.push_back(env_c);
    out.manip.push_back(manip_c);
    out.env_axes.push_back(ne > 0 ? principal_axes(cloud.points, &m.env, env_c) : all_axes);
    out.manip_axes.push_back(nm > 0 ? principal_axes(cloud.points, &m.manipulated, manip_c)
                                    : all_axes);
  }
  return out;
}

// Per-stage scene token variables (each G x (d+2)).
std::vector<int> build_scene_tokens(Tape& t, ParamVars& P, const ModelWeights& w,
                                    const PointCloud& cloud,
                                    const std::vector<StageMasks>& masks) {
  if (cloud.size() == 0) throw std::invalid_argument("encode_cloud: empty cloud");
  const auto& c = w.cfg;
  const Eigen::Index n = static_cast<Eigen::Index>(cloud.size());

  std::vector<int> out;
  for (const auto& m : masks) {
    Mat x(n, kPointFeat);
    Mat mb(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      // World coordinates, same normalization as the frame-slot features, so
      // slot-to-scene offsets are directly representable.
      const Vec3 q = cloud.points[i] / c.trans_scale;
      x(i, 0) = q.x();
      x(i, 1) = q.y();
      x(i, 2) = q.z();
      x(i, 3) = m.manipulated[i] ? 1.0 : 0.0;
      x(i, 4) = m.env[i] ? 1.0 : 0.0;
      mb(i, 0) = x(i, 3);
      mb(i, 1) = x(i, 4);
    }
    const int xv = t.leaf(std::move(x));
    const int h1 = t.tanh(t.add_rowvec(t.matmul(xv, P("pt_w1")), P("pt_b1")));
    const int f = t.tanh(t.add_rowvec(t.matmul(h1, P("pt_w2")), P("pt_b2")));
    const int scores = t.scale(t.matmul_nt(P("pool_q"), f), 1.0 / std::sqrt(double(c.d)));
    const int attn = t.softmax_rows(scores);
    const int tok = t.matmul(attn, f);
    const int pooled = t.matmul(attn, t.leaf(std::move(mb)));
    out.push_back(t.concat_cols(tok, pooled));
  }
  return out;
}

// Frame-side forward; returns the head output variable (slots x 6, non-real
// rows zeroed).
int build_frame_forward(Tape& t, ParamVars& P, const ModelWeights& w, const TokenLayout& layout,
                        const std::vector<int>& scene_vars, const StageCentroids& cent,
                        int level) {
  const auto& c = w.cfg;
  const int n = layout.n_slots();
  const int n_stages = static_cast<int>(scene_vars.size());

  Mat feats(n, kFrameFeat);
  Eigen::VectorXd real(n);
  std::vector<int> pos_idx(n), label_idx(n), level_idx(n, level);
  for (int i = 0; i < n; ++i) {
    const auto& s = layout.slots[i];
    const Pose pose = s.real ? s.pose : Pose::identity();
    const bool has_cent = s.stage >= 0 && s.stage < static_cast<int>(cent.env.size());
    const Vec3 env_c = has_cent ? cent.env[s.stage] : pose.translation;
    const Vec3 manip_c = has_cent ? cent.manip[s.stage] : pose.translation;
    const Mat3 env_a = has_cent ? cent.env_axes[s.stage] : Mat3::Identity();
    const Mat3 manip_a = has_cent ? cent.manip_axes[s.stage] : Mat3::Identity();
    feats.row(i) = frame_features(pose, c.trans_scale, env_c, manip_c, env_a, manip_a);
    real[i] = s.real ? 1.0 : 0.0;
    pos_idx[i] = i;
    const int li = stage_label_index(s.stage_label);
    label_idx[i] = li < 0 ? 0 : li;
  }

  int x = t.add_rowvec(t.matmul(t.leaf(std::move(feats)), P("frame_w")), P("frame_b"));
  x = t.add(x, t.gather_rows(P("pos_emb"), pos_idx));
  x = t.add(x, t.gather_rows(P("label_emb"), label_idx));
  x = t.add(x, t.gather_rows(P("level_emb"), level_idx));

  // Additive attention masks: non-real slots are invisible as keys; a frame
  // slot cross-attends only to its own stage's scene block.
  Mat self_mask = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    if (real[j] == 0.0) self_mask.col(j).setConstant(kMaskNegInf);
  }
  Mat cross_mask = Mat::Constant(n, std::max(1, n_stages) * c.G, kMaskNegInf);
  for (int i = 0; i < n; ++i) {
    const int st = layout.slots[i].stage;
    if (st >= 0 && st < n_stages) cross_mask.block(i, st * c.G, 1, c.G).setZero();
  }
  if (n_stages == 0) cross_mask.setZero();
  const int self_mask_v = t.leaf(self_mask);
  const int cross_mask_v = t.leaf(cross_mask);
  const int scene_all =
      n_stages == 0 ? -1 : (n_stages == 1 ? scene_vars[0] : t.concat_rows(scene_vars));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(c.d));

  for (int b = 0; b < c.B; ++b) {
    const std::string p = "blk" + std::to_string(b) + "_";
    {  // self-attention over frame slots
      const int q = t.matmul(x, P(p + "sa_wq"));
      const int k = t.matmul(x, P(p + "sa_wk"));
      const int v = t.matmul(x, P(p + "sa_wv"));
      const int a = t.softmax_rows(t.add(t.scale(t.matmul_nt(q, k), inv_sqrt_d), self_mask_v));
      const int o = t.rowmask(t.matmul(t.matmul(a, v), P(p + "sa_wo")), real);
      x = t.add(x, o);
    }
    if (scene_all >= 0) {  // cross-attention to scene tokens
      const int q = t.matmul(x, P(p + "ca_wq"));
      const int k = t.matmul(scene_all, P(p + "ca_wk"));
      const int v = t.matmul(scene_all, P(p + "ca_wv"));
      const int a = t.softmax_rows(t.add(t.scale(t.matmul_nt(q, k), inv_sqrt_d), cross_mask_v));
      const int o = t.rowmask(t.matmul(t.matmul(a, v), P(p + "ca_wo")), real);
      x = t.add(x, o);
    }
    {  // feedforward
      const int h = t.tanh(t.add_rowvec(t.matmul(x, P(p + "ff_w1")), P(p + "ff_b1")));
      const int o = t.rowmask(t.add_rowvec(t.matmul(h, P(p + "ff_w2")), P(p + "ff_b2")), real);
      x = t.add(x, o);
    }
  }
  return t.rowmask(t.add_rowvec(t.matmul(x, P("head_w")), P("head_b")), real);
}

}  // namespace

PointCloud subsample_cloud(const PointCloud& cloud, int n_points) {
  if (static_cast<int>(cloud.size()) <= n_points || n_points <= 0) return cloud;
  PointCloud out;
  const double stride = static_cast<double>(cloud.size()) / n_points;
  for (int i = 0; i < n_points; ++i) {
    const std::size_t j = static_cast<std::size_t>(i * stride);
    out.points.push_back(cloud.points[j]);
    out.object_index.push_back(cloud.object_index[j]);
    out.object_id.push_back(cloud.object_id[j]);
    out.patch_id.push_back(cloud.patch_id[j]);
  }
  return out;
}

SceneTokens encode_cloud(const ModelWeights& w, const PointCloud& cloud,
                         const std::vector<StageMasks>& masks) {
  Tape t;
  ParamVars P{&t, &w, {}};
  const auto vars = build_scene_tokens(t, P, w, cloud, masks);
  SceneTokens out;
  for (int v : vars) out.per_stage.push_back(t.val(v));
  out.centroids = stage_centroids(cloud, masks);
  return out;
}

Eigen::MatrixXd score_forward(const ModelWeights& w, const TokenLayout& layout,
                              const SceneTokens& scene, int level) {
  Tape t;
  ParamVars P{&t, &w, {}};
  std::vector<int> scene_vars;
  for (const auto& m : scene.per_stage) scene_vars.push_back(t.leaf(m));
  return t.val(build_frame_forward(t, P, w, layout, scene_vars, scene.centroids, level));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainSample make_train_sample(const ModelWeights& w, const PointCloud& cloud,
                              const std::vector<StagePlan>& plans, const CoMOKChain& chain) {
  TrainSample s;
  s.cloud = subsample_cloud(cloud, w.cfg.cloud_points);
  s.masks = attention_masks(plans, s.cloud);
  s.tokens = tokenize(chain, w.cfg.max_stages, w.cfg.max_k);
  return s;
}

namespace {

struct NoiseDraw {
  int level = 0;
  std::vector<std::pair<int, Twist>> eps;  // slot index -> tangent noise
};

NoiseDraw draw_noise(const ModelWeights& w, const TrainSample& sample, Rng& rng) {
  NoiseDraw d;
  d.level = static_cast<int>(rng.uniform_int(0, w.schedule.levels() - 1));
  const double sr = w.schedule.sigma_rot[d.level];
  const double st = w.schedule.sigma_trans[d.level];
  for (int i = 0; i < sample.tokens.n_slots(); ++i) {
    if (!sample.tokens.slots[i].predicted) continue;
    Twist eps;
    for (int k = 0; k < 3; ++k) eps.omega[k] = rng.gaussian(0.0, sr);
    for (int k = 0; k < 3; ++k) eps.v[k] = rng.gaussian(0.0, st);
    d.eps.emplace_back(i, eps);
  }
  return d;
}

double sample_loss(const ModelWeights& w, const TrainSample& sample, const NoiseDraw& noise,
                   Eigen::VectorXd* grad) {
  const double sr = w.schedule.sigma_rot[noise.level];
  const double st = w.schedule.sigma_trans[noise.level];

  TokenLayout noisy = sample.tokens;
  Mat target = Mat::Zero(noisy.n_slots(), 6);
  Eigen::VectorXd pred = Eigen::VectorXd::Zero(noisy.n_slots());
  for (const auto& [slot, eps] : noise.eps) {
    noisy.slots[slot].pose = compose(expmap(eps), noisy.slots[slot].pose);
    target.row(slot).head<3>() = eps.omega / sr;
    target.row(slot).tail<3>() = eps.v / st;
    pred[slot] = 1.0;
  }
  const int n_pred = static_cast<int>(noise.eps.size());
  if (n_pred == 0) return 0.0;

  Tape t;
  ParamVars P{&t, &w, {}};
  const auto scene_vars = build_scene_tokens(t, P, w, sample.cloud, sample.masks);
  const int out = build_frame_forward(t, P, w, noisy, scene_vars,
                                      stage_centroids(sample.cloud, sample.masks), noise.level);
  const int resid = t.rowmask(t.add(out, t.leaf(target)), pred);
  const int loss = t.scale(t.sq_sum(resid), 1.0 / n_pred);

  if (grad) {
    t.backward(loss);
    for (const auto& [name, var] : P.vars) {
      const auto& spec = w.spec(name);
      if (!spec.trainable) continue;
      const Mat& g = t.grad(var);
      if (g.size() == 0) continue;
      grad->segment(spec.offset, g.size()) +=
          Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    }
  }
  return t.val(loss)(0, 0);
}

}  // namespace

double dsm_loss(const ModelWeights& w, const std::vector<TrainSample>& batch, Rng& rng) {
  Eigen::VectorXd dummy;
  return dsm_loss_grad(w, batch, rng, dummy, GradMode::Serial);
}

double dsm_loss_grad(const ModelWeights& w, const std::vector<TrainSample>& batch, Rng& rng,
                     Eigen::VectorXd& grad, GradMode mode) {
  if (batch.empty()) throw std::invalid_argument("dsm_loss: empty batch");
  const bool want_grad = grad.size() == w.size();
  if (want_grad) grad.setZero();

  // Noise is drawn serially so Serial and Parallel modes match bitwise.
  std::vector<NoiseDraw> noise;
  noise.reserve(batch.size());
  for (const auto& s : batch) noise.push_back(draw_noise(w, s, rng));

  const int n = static_cast<int>(batch.size());
  std::vector<double> losses(n, 0.0);
  std::vector<Eigen::VectorXd> grads;
  if (want_grad) grads.assign(n, Eigen::VectorXd());

  auto run_item = [&](int i) {
    Eigen::VectorXd* g = nullptr;
    if (want_grad) {
      grads[i] = Eigen::VectorXd::Zero(w.size());
      g = &grads[i];
    }
    losses[i] = sample_loss(w, batch[i], noise[i], g);
  };

  if (mode == GradMode::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) run_item(i);
  } else {
    for (int i = 0; i < n; ++i) run_item(i);
  }

  double total = 0.0;
  for (int i = 0; i < n; ++i) {  // index-ordered reduction: deterministic
    total += losses[i];
    if (want_grad) grad += grads[i];
  }
  if (want_grad) grad /= n;
  return total / n;
}

TrainResult train(ModelWeights& w, const std::vector<TrainSample>& dataset,
                  const TrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  Rng rng(cfg.seed);
  TrainResult result;
  Eigen::VectorXd grad(w.size());

  std::ofstream csv;
  if (!cfg.loss_csv.empty()) {
    csv.open(cfg.loss_csv);
    csv << "step,loss,lr\n";
  }

  Eigen::VectorXd m = Eigen::VectorXd::Zero(w.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(w.size());
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<TrainSample> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      batch.push_back(dataset[rng.uniform_int(0, static_cast<int>(dataset.size()) - 1)]);
    }
    const double loss = dsm_loss_grad(w, batch, rng, grad, cfg.grad_mode);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train: loss diverged (non-finite) at step " +
                               std::to_string(step));
    }
    // Global-norm clipping guards against the occasional high-noise batch.
    if (cfg.clip_norm > 0.0) {
      const double n = grad.norm();
      if (n > cfg.clip_norm) grad *= cfg.clip_norm / n;
    }
    const double lr = cfg.lr * 0.5 * (1.0 + std::cos(M_PI * step / std::max(1, cfg.steps)));
    // Adam with cosine learning-rate decay.
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v.array() + (1.0 - b2) * grad.array().square();
    const double c1 = 1.0 - std::pow(b1, step + 1);
    const double c2 = 1.0 - std::pow(b2, step + 1);
    w.flat.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    result.loss_curve.push_back(loss);
    if (csv.is_open()) csv << step << "," << loss << "," << lr << "\n";
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

CoMOKChain chain_template_from_plan(const std::vector<StagePlan>& plans) {
  CoMOKChain chain;
  for (const auto& p : plans) {
    StageAction st;
    st.task_label = p.stage_label;
    st.attachment = p.manipulated;
    st.affordance = Pose::identity();
    st.action_seq.assign(p.max_k, Pose::identity());
    chain.stages.push_back(std::move(st));
  }
  return chain;
}

namespace {

// Cable chains carry a symbolic patch (-1) out of the planner; bind it to the
// rope patch nearest the sampled grasp position.
void resolve_patches(CoMOKChain& chain, const PointCloud& cloud) {
  for (std::size_t s = 0; s < chain.stages.size(); ++s) {
    auto* lp = std::get_if<LocalPatch>(&chain.stages[s].attachment);
    if (!lp || lp->patch_id >= 0) continue;
    Vec3 anchor = chain.stages[s].action_seq.empty()
                      ? Vec3::Zero()
                      : chain.stages[s].action_seq.back().translation;
    if (s > 0 && !chain.stages[s - 1].action_seq.empty()) {
      anchor = chain.stages[s - 1].action_seq.back().translation;
    }
    double best = 1e18;
    int best_patch = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (cloud.object_id[i] != lp->object_id || cloud.patch_id[i] < 0) continue;
      const double d = (cloud.points[i] - anchor).squaredNorm();
      if (d < best) {
        best = d;
        best_patch = cloud.patch_id[i];
      }
    }
    lp->patch_id = best_patch;
  }
}

}  // namespace

CandidateSet sample(const ModelWeights& w, const PointCloud& cloud,
                    const std::vector<StagePlan>& plans, const CoMOKChain& chain_template,
                    const SampleConfig& scfg, Rng& rng) {
  CandidateSet set;
  set.weights_version = w.version;
  if (scfg.n_candidates <= 0) return set;

  const PointCloud sub = subsample_cloud(cloud, w.cfg.cloud_points);
  const auto masks = attention_masks(plans, sub);
  const SceneTokens scene = encode_cloud(w, sub, masks);
  const TokenLayout base = tokenize(chain_template, w.cfg.max_stages, w.cfg.max_k);

  Vec3 centroid = Vec3::Zero();
  for (const auto& p : sub.points) centroid += p;
  centroid /= static_cast<double>(std::max<std::size_t>(1, sub.size()));

  const auto& sch = w.schedule;
  const double sr0 = sch.sigma_rot.front();
  const double st0 = sch.sigma_trans.front();

  for (int c = 0; c < scfg.n_candidates; ++c) {
    TokenLayout layout = base;
    for (auto& s : layout.slots) {
      if (!s.predicted) continue;
      // Action slots start near the scene centroid; affordance slots are
      // object-local, so they start near the identity.
      const Pose center = s.action_index >= 0 ? Pose(Rotation::identity(), centroid)
                                              : Pose::identity();
      s.pose = perturb(center, sr0, st0, rng).first;
    }

    for (int l = 0; l < sch.levels(); ++l) {
      const double sr = sch.sigma_rot[l];
      const double st = sch.sigma_trans[l];
      const int extra = l == sch.levels() - 1 ? sch.steps_per_level / 2 : 0;
      for (int step = 0; step < sch.steps_per_level + extra; ++step) {
        const Mat s_hat = score_forward(w, layout, scene, l);
        const double beta = step < sch.steps_per_level ? scfg.beta : 0.0;
        for (int i = 0; i < layout.n_slots(); ++i) {
          auto& slot = layout.slots[i];
          if (!slot.predicted) continue;
          Twist delta;
          for (int k = 0; k < 3; ++k) {
            delta.omega[k] = sch.step_eps * sr * s_hat(i, k) +
                             std::sqrt(2.0 * sch.step_eps) * sr * beta * rng.gaussian(0.0, 1.0);
          }
          for (int k = 0; k < 3; ++k) {
            delta.v[k] = sch.step_eps * st * s_hat(i, k + 3) +
                         std::sqrt(2.0 * sch.step_eps) * st * beta * rng.gaussian(0.0, 1.0);
          }
          slot.pose = compose(expmap(delta), slot.pose);
        }
      }
    }

    CoMOKChain chain = detokenize(layout, chain_template);
    resolve_patches(chain, sub);
    set.chains.push_back(std::move(chain));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'C', 'M', 'K', 'D', 'N', 'Z', '0', '1'};
}

void save_checkpoint(const std::string& path, const ModelWeights& w) {
  json h;
  h["version"] = w.version;
  h["r6_ordering"] = "rotation_first";
  h["config"] = {{"d", w.cfg.d},
                 {"G", w.cfg.G},
                 {"B", w.cfg.B},
                 {"ffn_mult", w.cfg.ffn_mult},
                 {"max_stages", w.cfg.max_stages},
                 {"max_k", w.cfg.max_k},
                 {"cloud_points", w.cfg.cloud_points},
                 {"trans_scale", w.cfg.trans_scale}};
  h["schedule"] = {{"sigma_rot", w.schedule.sigma_rot},
                   {"sigma_trans", w.schedule.sigma_trans},
                   {"steps_per_level", w.schedule.steps_per_level},
                   {"step_eps", w.schedule.step_eps}};
  h["labels"] = stage_label_vocabulary();
  json manifest = json::array();
  for (const auto& p : w.manifest) {
    manifest.push_back({{"name", p.name},
                        {"rows", p.rows},
                        {"cols", p.cols},
                        {"offset", p.offset},
                        {"trainable", p.trainable}});
  }
  h["manifest"] = manifest;
  const std::string header = h.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(kMagic, 8);
  const std::uint64_t hlen = header.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(reinterpret_cast<const char*>(w.flat.data()),
          static_cast<std::streamsize>(w.flat.size() * sizeof(double)));
}

ModelWeights load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("bad checkpoint magic: " + path);
  }
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  const json h = json::parse(header);

  ModelWeights w;
  w.version = h.at("version");
  const auto& c = h.at("config");
  w.cfg.d = c.at("d");
  w.cfg.G = c.at("G");
  w.cfg.B = c.at("B");
  w.cfg.ffn_mult = c.at("ffn_mult");
  w.cfg.max_stages = c.at("max_stages");
  w.cfg.max_k = c.at("max_k");
  w.cfg.cloud_points = c.at("cloud_points");
  w.cfg.trans_scale = c.at("trans_scale");
  const auto& s = h.at("schedule");
  w.schedule.sigma_rot = s.at("sigma_rot").get<std::vector<double>>();
  w.schedule.sigma_trans = s.at("sigma_trans").get<std::vector<double>>();
  w.schedule.steps_per_level = s.at("steps_per_level");
  w.schedule.step_eps = s.at("step_eps");
  for (const auto& m : h.at("manifest")) {
    w.manifest.push_back({m.at("name"), m.at("rows"), m.at("cols"),
                          m.at("offset").get<Eigen::Index>(), m.at("trainable").get<bool>()});
  }
  const auto& last = w.manifest.back();
  w.flat.resize(last.offset + static_cast<Eigen::Index>(last.rows) * last.cols);
  f.read(reinterpret_cast<char*>(w.flat.data()),
         static_cast<std::streamsize>(w.flat.size() * sizeof(double)));
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  return w;
}

}  // namespace comok
