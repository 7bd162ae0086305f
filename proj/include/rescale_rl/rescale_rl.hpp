#pragma once

#include "rescale_rl/matrix.hpp"
#include "rescale_rl/activation.hpp"
#include "rescale_rl/network.hpp"
#include "rescale_rl/optimizer.hpp"
#include "rescale_rl/diagnostics.hpp"
#include "rescale_rl/scaling.hpp"
#include "rescale_rl/ans.hpp"
#include "rescale_rl/popart.hpp"
#include "rescale_rl/envs.hpp"
#include "rescale_rl/agents.hpp"
#include "rescale_rl/theory.hpp"
#include "rescale_rl/harness.hpp"
