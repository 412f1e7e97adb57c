#pragma once

#include <cstdint>

#include "listap/training.hpp"

namespace fixture {

inline constexpr double kLr0 = 0.01;

// K=32, F=64, 40 samples per class.
inline listap::SyntheticSpec balanced_spec(std::uint64_t seed) {
  listap::SyntheticSpec s;
  s.seed = seed;
  return s;
}

// 4 majority classes of 150 and 28 minority classes of 8. The two groups are
// told apart in different latent blocks.
inline listap::SyntheticSpec imbalanced_spec(std::uint64_t seed) {
  listap::SyntheticSpec s;
  s.seed = seed;
  for (std::size_t k = 0; k < s.num_classes; ++k) {
    s.class_counts.push_back(k < 4 ? 150 : 8);
    s.class_block.push_back(k < 4 ? 0 : 1);
  }
  return s;
}

inline listap::TrainConfig train_config(std::uint64_t seed, listap::LossKind loss = listap::LossKind::ApQ) {
  listap::TrainConfig c;
  c.lr0 = kLr0;
  c.total_iters = 200;
  c.batch_size = 128;
  c.loss = loss;
  c.seed = seed;
  c.eval_interval = 200;
  return c;
}

}  // namespace fixture
