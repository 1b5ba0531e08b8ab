#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

#include "embedrl/error.hpp"
#include "embedrl/tcot.hpp"
#include "embedrl/embedding.hpp"
#include "embedrl/embedding_io.hpp"
#include "embedrl/reward.hpp"
#include "embedrl/grpo.hpp"
#include "embedrl/sim_env.hpp"
#include "embedrl/data_pipeline.hpp"
#include "embedrl/eval_metrics.hpp"
#include "embedrl/prompts.hpp"
