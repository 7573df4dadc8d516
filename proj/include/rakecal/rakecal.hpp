#pragma once

#include "rakecal/errors.hpp"
#include "rakecal/numeric.hpp"
#include "rakecal/survival_core.hpp"
#include "rakecal/cohort.hpp"
#include "rakecal/calibration.hpp"
#include "rakecal/raking.hpp"
#include "rakecal/design_bootstrap.hpp"
#include "rakecal/simulation.hpp"
#include "rakecal/io.hpp"
