#pragma once

#include "m1lab/config.hpp"
#include "m1lab/errors.hpp"
#include "m1lab/hermite.hpp"
#include "m1lab/m1_metric.hpp"
#include "m1lab/manifest.hpp"
#include "m1lab/nuclear_space.hpp"
#include "m1lab/numeric.hpp"
#include "m1lab/parallel.hpp"
#include "m1lab/particle_system.hpp"
#include "m1lab/path.hpp"
#include "m1lab/path_io.hpp"
#include "m1lab/rng.hpp"
#include "m1lab/spde_limit.hpp"
#include "m1lab/tightness_lab.hpp"
#include "m1lab/version.hpp"
