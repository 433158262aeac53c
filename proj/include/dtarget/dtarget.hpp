#pragma once

#include "baselines.hpp"
#include "bench.hpp"
#include "bclone.hpp"
#include "dporacle.hpp"
#include "errors.hpp"
#include "mlp.hpp"
#include "qlearn.hpp"
#include "satsim.hpp"
#include "worldgen.hpp"
