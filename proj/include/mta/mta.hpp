#pragma once

/// Umbrella header for the MTA library: model-free multiple testing with
/// angular balanced statistics, plus the kernel-independence baseline,
/// simulation generators, and reporting helpers.

#include "mta/baselines.hpp"
#include "mta/errors.hpp"
#include "mta/evalmetrics.hpp"
#include "mta/mirror.hpp"
#include "mta/parallel.hpp"
#include "mta/precision.hpp"
#include "mta/report.hpp"
#include "mta/rng.hpp"
#include "mta/simgen.hpp"
#include "mta/sir.hpp"
#include "mta/types.hpp"
