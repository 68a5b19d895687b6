#pragma once

#include "qspline/sun_core.hpp"
#include "qspline/curve_grid.hpp"
#include "qspline/extrinsic.hpp"
#include "qspline/energy_diag.hpp"
#include "qspline/flow_solver.hpp"
#include "qspline/initializer.hpp"
#include "qspline/oracle.hpp"
