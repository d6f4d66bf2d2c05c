// Serial reference vs OpenMP kernels: GEMM and frame-parallel R-softmax.
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "rilm/domain_adapt.hpp"
#include "rilm/kernels.hpp"

namespace {

template <typename F>
double best_ms(F&& f, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

int main() {
  std::mt19937_64 rng(7);
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %10s %10s %8s %s\n", "kernel", "serial_ms", "omp_ms", "speedup", "max_abs_diff");

  for (std::size_t n : {64, 128, 256, 512}) {
    const auto a = random_vec(n * n, rng), b = random_vec(n * n, rng);
    std::vector<double> c1(n * n), c2(n * n);
    const double ts = best_ms([&] {
      std::fill(c1.begin(), c1.end(), 0.0);
      rilm::kernels::serial::gemm_nn(a.data(), b.data(), c1.data(), n, n, n);
    }, 3);
    const double tp = best_ms([&] {
      std::fill(c2.begin(), c2.end(), 0.0);
      rilm::kernels::gemm_nn(a.data(), b.data(), c2.data(), n, n, n);
    }, 3);
    double diff = 0.0;
    for (std::size_t i = 0; i < c1.size(); ++i) diff = std::max(diff, std::abs(c1[i] - c2[i]));
    char name[64];
    std::snprintf(name, sizeof name, "gemm_nn %zux%zux%zu", n, n, n);
    std::printf("%-28s %10.3f %10.3f %8.2f %.3g\n", name, ts, tp, ts / tp, diff);
  }

  for (std::size_t frames : {200, 2000, 20000}) {
    const std::size_t V = 48;
    const auto logits = random_vec(frames * V, rng);
    rilm::adapt::PriorRatio ratio;
    std::uniform_real_distribution<double> u(0.2, 5.0);
    for (std::size_t i = 0; i + 1 < V; ++i) ratio.weights.push_back(u(rng));
    std::vector<double> r1, r2;
    const double ts = best_ms([&] { r1 = rilm::adapt::serial::log_posteriors(logits, frames, V, &ratio); }, 5);
    const double tp = best_ms([&] { r2 = rilm::adapt::log_posteriors(logits, frames, V, &ratio); }, 5);
    double diff = 0.0;
    for (std::size_t i = 0; i < r1.size(); ++i) diff = std::max(diff, std::abs(r1[i] - r2[i]));
    char name[64];
    std::snprintf(name, sizeof name, "r_softmax %zux%zu", frames, V);
    std::printf("%-28s %10.3f %10.3f %8.2f %.3g\n", name, ts, tp, ts / tp, diff);
  }
  return 0;
}
