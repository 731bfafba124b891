#pragma once

#include <random>
#include <string>

#include "enet/graph.hpp"

namespace fixtures {

/// Replaces the identity BatchNorm statistics from init_weights with random
/// ones, so folding actually changes the weights.
inline void randomize_batchnorm(const enet::Graph& g, enet::WeightStore& w, unsigned seed) {
  std::mt19937 rng(seed);
  auto u = [&](float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(rng); };
  for (const auto& n : g.nodes()) {
    if (n.kind != enet::NodeKind::BatchNorm) continue;
    for (float& v : w.at(n.weight_refs.at("gamma")).data()) v = u(0.5f, 1.5f);
    for (float& v : w.at(n.weight_refs.at("beta")).data()) v = u(-0.2f, 0.2f);
    for (float& v : w.at(n.weight_refs.at("mean")).data()) v = u(-0.2f, 0.2f);
    for (float& v : w.at(n.weight_refs.at("var")).data()) v = u(0.5f, 2.0f);
  }
}

/// Random chain of 1x1 convolutions, PReLUs and BatchNorms with residual Adds
/// reaching back to arbitrary earlier nodes of the same width.
inline enet::Graph random_chain(unsigned seed, std::size_t length = 12) {
  std::mt19937 rng(seed);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  const std::size_t channels = 1 + pick(4);
  const std::size_t side = 2 * (1 + pick(4));
  enet::GraphBuilder b({channels, side, side}, 2);
  std::vector<int> same_shape{b.input()};
  int x = b.input();
  for (std::size_t i = 0; i < length; ++i) {
    const std::string name = "n" + std::to_string(i);
    switch (pick(5)) {
      case 0:
        x = b.conv(name, x, {.kernel_h = 3, .kernel_w = 3, .pad_h = 1, .pad_w = 1, .out_channels = channels});
        break;
      case 1:
        x = b.prelu(name, x);
        break;
      case 2:
        x = b.batchnorm(name, b.conv(name + "c", x, {.out_channels = channels}));
        break;
      case 3: {
        const int pool = b.maxpool(name + "p", x);
        x = b.unpool(name, b.prelu(name + "a", pool), pool);
        break;
      }
      default:
        x = b.add(name, x, same_shape[pick(same_shape.size())]);
        break;
    }
    same_shape.push_back(x);
  }
  return std::move(b).finish(x);
}

}  // namespace fixtures
