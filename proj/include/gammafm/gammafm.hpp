#pragma once

#include "numerics.hpp"
#include "model.hpp"
#include "weighting.hpp"
#include "training.hpp"
#include "sampler.hpp"
#include "metrics.hpp"
#include "datasets.hpp"
#include "pme.hpp"
#include "spectral.hpp"
#include "experiments.hpp"
#include "bench.hpp"
#include "io.hpp"
#include "svg.hpp"
