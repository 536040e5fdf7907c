#pragma once

#include "macromfg/agents.hpp"
#include "macromfg/config.hpp"
#include "macromfg/engine.hpp"
#include "macromfg/io.hpp"
#include "macromfg/linalg.hpp"
#include "macromfg/meanfield.hpp"
#include "macromfg/noise.hpp"
#include "macromfg/price.hpp"
#include "macromfg/relaxed.hpp"
#include "macromfg/rng.hpp"
#include "macromfg/stats.hpp"
