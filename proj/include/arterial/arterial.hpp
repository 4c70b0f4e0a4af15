#pragma once

#include "arterial/builders.hpp"
#include "arterial/carfollow.hpp"
#include "arterial/common.hpp"
#include "arterial/demand.hpp"
#include "arterial/engine.hpp"
#include "arterial/metrics.hpp"
#include "arterial/network.hpp"
#include "arterial/platoon.hpp"
#include "arterial/rng.hpp"
#include "arterial/scenario.hpp"
#include "arterial/scenario_io.hpp"
#include "arterial/sensing.hpp"
#include "arterial/signal.hpp"
