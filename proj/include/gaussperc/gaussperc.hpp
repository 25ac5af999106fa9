#pragma once

#include "gaussperc/burton_keane.hpp"
#include "gaussperc/connectivity.hpp"
#include "gaussperc/counting.hpp"
#include "gaussperc/error.hpp"
#include "gaussperc/experiments.hpp"
#include "gaussperc/grid.hpp"
#include "gaussperc/io.hpp"
#include "gaussperc/kernels.hpp"
#include "gaussperc/rng.hpp"
#include "gaussperc/shift.hpp"
#include "gaussperc/stats.hpp"
#include "gaussperc/synthesis.hpp"
