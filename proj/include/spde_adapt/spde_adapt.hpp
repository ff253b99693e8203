#pragma once

#include "spde_adapt/errors.hpp"
#include "spde_adapt/spectral_core.hpp"
#include "spde_adapt/noise.hpp"
#include "spde_adapt/models.hpp"
#include "spde_adapt/steppers.hpp"
#include "spde_adapt/adapt.hpp"
#include "spde_adapt/harness.hpp"
