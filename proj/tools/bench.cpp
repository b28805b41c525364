// Compares the serial reference gradient against the OpenMP-parallel one:
// wall-clock timing plus a bitwise equality check of loss and gradients.

#include <chrono>
#include <cstdlib>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "comok/denoiser.hpp"
#include "comok/eval.hpp"

using namespace comok;
using clock_type = std::chrono::steady_clock;

namespace {

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
#ifdef _OPENMP
  if (const char* workers = std::getenv("COMOK_WORKERS")) {
    const int n = std::atoi(workers);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
  int batch_size = argc > 1 ? std::atoi(argv[1]) : 16;
  int reps = argc > 2 ? std::atoi(argv[2]) : 10;

  DenoiserConfig cfg;
  cfg.d = 48;
  cfg.G = 8;
  cfg.B = 1;
  cfg.cloud_points = 128;
  const auto sched = NoiseSchedule::geometric(8, 1.0, 0.05, 0.3, 0.005);
  const ModelWeights w = init_weights(cfg, sched, 0);

  SceneGenConfig scfg;
  const auto dataset = build_dataset(w, TaskFamily::Place, 4, 0, scfg, 512, 8);
  if (static_cast<int>(dataset.size()) < batch_size) batch_size = dataset.size();
  std::vector<TrainSample> batch(dataset.begin(), dataset.begin() + batch_size);

  std::cout << "model d=" << cfg.d << " G=" << cfg.G << " B=" << cfg.B
            << ", batch=" << batch_size << ", reps=" << reps << "\n";
#ifdef _OPENMP
  std::cout << "openmp threads: " << omp_get_max_threads() << "\n";
#else
  std::cout << "openmp: disabled at build time\n";
#endif

  Eigen::VectorXd gs(w.size()), gp(w.size());
  double loss_s = 0.0, loss_p = 0.0;

  auto t0 = clock_type::now();
  for (int r = 0; r < reps; ++r) {
    Rng rng(1234);
    loss_s = dsm_loss_grad(w, batch, rng, gs, GradMode::Serial);
  }
  const double serial_s = seconds_since(t0) / reps;

  t0 = clock_type::now();
  for (int r = 0; r < reps; ++r) {
    Rng rng(1234);
    loss_p = dsm_loss_grad(w, batch, rng, gp, GradMode::Parallel);
  }
  const double parallel_s = seconds_since(t0) / reps;

  const bool loss_match = loss_s == loss_p;
  const bool grad_match = gs == gp;
  std::cout << "serial:   " << serial_s << " s/step\n";
  std::cout << "parallel: " << parallel_s << " s/step\n";
  std::cout << "speedup:  " << serial_s / parallel_s << "x\n";
  std::cout << "loss bitwise equal: " << (loss_match ? "yes" : "NO") << "\n";
  std::cout << "grad bitwise equal: " << (grad_match ? "yes" : "NO") << "\n";
  return loss_match && grad_match ? 0 : 1;
}
