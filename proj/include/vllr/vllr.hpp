#pragma once

#include "vllr/checkpoint.hpp"
#include "vllr/commands.hpp"
#include "vllr/config.hpp"
#include "vllr/decomposer_client.hpp"
#include "vllr/env.hpp"
#include "vllr/error.hpp"
#include "vllr/experiment.hpp"
#include "vllr/house.hpp"
#include "vllr/metrics.hpp"
#include "vllr/mlp.hpp"
#include "vllr/policy.hpp"
#include "vllr/ppo.hpp"
#include "vllr/progress.hpp"
#include "vllr/progress_estimator.hpp"
#include "vllr/reward.hpp"
#include "vllr/rollout.hpp"
#include "vllr/scene_graph.hpp"
#include "vllr/self_certainty.hpp"
#include "vllr/trainer.hpp"
