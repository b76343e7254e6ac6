#pragma once

#include "wsm/core.hpp"
#include "wsm/rng.hpp"
#include "wsm/model/concepts.hpp"
#include "wsm/model/diagnostics.hpp"
#include "wsm/model/euler.hpp"
#include "wsm/model/gbm.hpp"
#include "wsm/model/path_set.hpp"
#include "wsm/model/simulate.hpp"
#include "wsm/mesh/backward.hpp"
#include "wsm/mesh/fr_estimate.hpp"
#include "wsm/mesh/parameters.hpp"
#include "wsm/mesh/reward.hpp"
#include "wsm/mesh/serialize.hpp"
#include "wsm/mesh/weights.hpp"
#include "wsm/policy/continuation.hpp"
#include "wsm/policy/lower_bound.hpp"
#include "wsm/policy/neighbours.hpp"
#include "wsm/baseline/reference.hpp"
#include "wsm/baseline/regression.hpp"
#include "wsm/densityx/chain.hpp"
#include "wsm/densityx/diffusion.hpp"
#include "wsm/densityx/expansion.hpp"
#include "wsm/harness/config.hpp"
#include "wsm/harness/experiment.hpp"
#include "wsm/harness/oracle.hpp"
#include "wsm/harness/results.hpp"
#include "wsm/harness/stats.hpp"
