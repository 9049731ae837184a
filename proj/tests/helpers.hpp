#pragma once

#include <cmath>
#include <functional>
#include <random>

#include <torch/torch.h>

#include "turbo_twin/config.hpp"
#include "turbo_twin/data.hpp"
#include "turbo_twin/grid.hpp"

namespace turbo::testing {

// Central differences of a scalar function of x, one coordinate at a time.
// Uses forward evaluations only.
inline torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                                      double h = 1e-6) {
  auto base = x.detach().clone().to(torch::kFloat64).contiguous();
  auto grad = torch::zeros_like(base);
  auto flat = base.view({-1});
  auto g = grad.view({-1});
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double v = flat[i].item<double>();
    flat[i] = v + h;
    const double up = f(base);
    flat[i] = v - h;
    const double down = f(base);
    flat[i] = v;
    g[i] = (up - down) / (2 * h);
  }
  return grad;
}

// max |a-b| / max(|b|_inf, floor)
inline double relative_error(const torch::Tensor& a, const torch::Tensor& b, double floor = 1e-3) {
  const double diff = (a - b).abs().max().item<double>();
  const double scale = std::max(b.abs().max().item<double>(), floor);
  return diff / scale;
}

inline Grid random_grid(std::size_t side, std::mt19937_64& rng, bool binary = false) {
  Grid g(side);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : g.pixels()) v = binary ? (u(rng) < 0.5 ? 0.0 : 1.0) : u(rng);
  return g;
}

// Random binary templates passed through `channel` (identity by default).
inline std::vector<Sample> channel_samples(std::size_t n, std::size_t side, std::uint64_t seed,
                                           ChannelParams channel = {}) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "s" + std::to_string(i);
    DigitalTemplate t(random_grid(side, rng, true), id);
    channel.seed = seed * 1000 + i;
    out.push_back({t, synth_channel(t, channel)});
  }
  return out;
}

// Small enough for unit tests on 32x32 inputs.
inline TurboConfig tiny_config(std::uint64_t seed = 1) {
  TurboConfig cfg;
  cfg.seed = seed;
  cfg.model.base_width = 4;
  cfg.model.residual_blocks = 1;
  cfg.model.critic_base_width = 4;
  cfg.optimizer.batch_size = 2;
  return cfg;
}

}  // namespace turbo::testing
