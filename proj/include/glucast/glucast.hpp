#pragma once

// Umbrella header for the glucose-forecasting engine.

#include "glucast/array.hpp"
#include "glucast/baselines.hpp"
#include "glucast/config.hpp"
#include "glucast/csv.hpp"
#include "glucast/metrics.hpp"
#include "glucast/model.hpp"
#include "glucast/normalize.hpp"
#include "glucast/ops.hpp"
#include "glucast/optim.hpp"
#include "glucast/pipeline.hpp"
#include "glucast/rng.hpp"
#include "glucast/series.hpp"
#include "glucast/simulator.hpp"
#include "glucast/svg.hpp"
#include "glucast/tape.hpp"
#include "glucast/trainer.hpp"
#include "glucast/windows.hpp"
