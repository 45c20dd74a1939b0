#pragma once

#include "vllr/config.hpp"

namespace testing_support {

// Small enough that a full pretrain + stage I + stage II run takes seconds.
inline vllr::ExperimentConfig tiny_config(std::uint64_t seed = 3) {
  vllr::ExperimentConfig c;
  c.seed = seed;
  c.tasks = {"objnav"};
  c.houses.params.rooms_max = 2;
  c.houses.train_count = 16;
  c.houses.test_count = 6;
  c.pretrain.demos = 24;
  c.pretrain.epochs = 4;
  c.pretrain.hidden = {32};
  c.train.stage1_steps = 128;
  c.train.stage2_steps = 256;
  c.train.eval_every = 128;
  c.train.eval_episodes = 4;
  c.ppo.rollout_length = 32;
  c.ppo.num_envs = 4;
  c.ppo.minibatch_size = 32;
  c.ppo.epochs_per_batch = 2;
  c.ppo.value_epochs_stage1 = 2;
  c.ppo.value_hidden = {32};
  c.ppo.gamma = 0.9;
  c.ppo.gamma_stage1 = 0.9;
  c.eval.episodes_per_task = 8;
  c.estimator.profile = "late_gradual";
  return c;
}

}  // namespace testing_support
