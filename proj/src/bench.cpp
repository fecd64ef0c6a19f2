#include "ema/bench.hpp"

#include <algorithm>
#include <chrono>
#include <random>

namespace ema {

std::vector<BenchShape> resnet_stage_shapes(Index input_hw, Index batch) {
  if (input_hw < 8 || batch < 1) throw ConfigError("bench needs input_hw >= 8 and batch >= 1");
  std::vector<BenchShape> shapes;
  Index hw = input_hw;
  for (Index c = 256; c <= 2048; c *= 2) {
    shapes.push_back({batch, c, hw, hw});
    hw /= 2;
  }
  return shapes;
}

double median(std::vector<double> samples) {
  if (samples.empty()) throw ConfigError("median of an empty sample");
  const std::size_t mid = samples.size() / 2;
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(mid), samples.end());
  const double upper = samples[mid];
  if (samples.size() % 2 == 1) return upper;
  const double lower = *std::max_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::vector<BenchRow> bench_ema(const std::vector<BenchShape>& shapes, const BenchConfig& cfg) {
  if (cfg.repetitions < 30) throw ConfigError("bench repetitions must be >= 30");
  if (cfg.warmup < 5) throw ConfigError("bench warm-ups must be >= 5");
  std::vector<BenchRow> rows;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (const BenchShape& s : shapes) {
    const EmaParams params = ema_init(s.channels, cfg.groups, rng());
    Tensor x(Shape{s.batch, s.channels, s.height, s.width});
    for (Index i = 0; i < x.size(); ++i) x[i] = dist(rng);

    volatile double sink = 0.0;
    for (Index i = 0; i < cfg.warmup; ++i) sink = sink + ema_forward(params, x, cfg.fusion)[0];
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(cfg.repetitions));
    for (Index i = 0; i < cfg.repetitions; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      sink = sink + ema_forward(params, x, cfg.fusion)[0];
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    rows.push_back({s, cfg.groups, median(times), *std::min_element(times.begin(), times.end()), cfg.repetitions});
  }
  return rows;
}

}  // namespace ema
