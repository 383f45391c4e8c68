#pragma once

#define GRAPHON_SPDE_VERSION "0.1.0"

#include "error.hpp"
#include "grid.hpp"
#include "kernels.hpp"
#include "noise.hpp"
#include "dynamics.hpp"
#include "experiments.hpp"
