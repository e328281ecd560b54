#pragma once

#include "error.hpp"
#include "matrix.hpp"
#include "linalg.hpp"
#include "rng.hpp"
#include "problem.hpp"
#include "gradient.hpp"
#include "subspace.hpp"
#include "stats.hpp"
#include "concentration.hpp"
#include "config.hpp"
#include "experiment.hpp"
#include "phases.hpp"
#include "sweep.hpp"
#include "figures.hpp"
